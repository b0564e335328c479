//! Agent abstraction over chat-style vision-language endpoints: prompt
//! templates, transport (HTTP or scripted mock), and strict reply parsing.

mod http;
mod mock;
mod parse;
mod templates;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpAgent;
pub use mock::{MockAgent, MockEntry};
pub use parse::{extract_first_json_object, parse_json_reply, AgentReply, ParsedReply};
pub use templates::{
    has_unfilled_slots, render_prompt, PromptSlots, TemplateId, EMPTY_KB_SENTINEL,
    REASONING_SYSTEM_PROMPT,
};

/// Reprompt appended after an unparseable reply, before the single retry.
pub const REPROMPT_TEXT: &str =
    "Your previous reply was not valid JSON per the required format. Reply with only the JSON object.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("template {template}: missing slot {slot:?}")]
    MissingSlot {
        template: TemplateId,
        slot: &'static str,
    },
    #[error("template {template}: needs {expected} attached image(s), got {got}")]
    MissingImages {
        template: TemplateId,
        expected: usize,
        got: usize,
    },
    #[error("transport error: {message}")]
    Transport { message: String },
    #[error("http status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("mock script has no reply for ({template}, sample {sample:?}, call {index})")]
    MockExhausted {
        template: TemplateId,
        sample: String,
        index: usize,
    },
    #[error("reply to {template} was not valid: {reason}")]
    BadReply { template: TemplateId, reason: String },
    #[error("agent configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// One message of a prompt: text plus PNG attachments, in order.
#[derive(Debug, Clone)]
pub struct AgentMessage {
    pub role: Role,
    pub text: String,
    pub images: Vec<Vec<u8>>,
}

impl AgentMessage {
    pub fn user(text: String, images: Vec<Vec<u8>>) -> Self {
        debug_assert!(!text.is_empty() || !images.is_empty());
        Self {
            role: Role::User,
            text,
            images,
        }
    }
}

/// Connection settings for one chat endpoint. The auth token is referenced by
/// environment variable name and resolved at construction, never stored in
/// config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: Vec<u64>,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_inflight() -> usize {
    4
}

fn default_backoff() -> Vec<u64> {
    vec![1000, 4000]
}

/// A shareable agent handle: either a live HTTP endpoint or a scripted mock.
#[derive(Clone)]
pub enum AgentHandle {
    Http(Arc<HttpAgent>),
    Mock(Arc<MockAgent>),
}

impl AgentHandle {
    pub fn http(config: EndpointConfig) -> Result<Self, AgentError> {
        Ok(AgentHandle::Http(Arc::new(HttpAgent::new(config)?)))
    }

    pub fn mock(entries: Vec<MockEntry>) -> Self {
        AgentHandle::Mock(Arc::new(MockAgent::new(entries)))
    }

    pub fn mock_from_script(path: &Path) -> Result<Self, AgentError> {
        Ok(AgentHandle::Mock(Arc::new(MockAgent::from_script(path)?)))
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, AgentHandle::Mock(_))
    }

    /// Send a rendered prompt and return the assistant text. `template` and
    /// `sample` identify the call for scripted mocks; the HTTP transport
    /// ignores them.
    pub fn chat(
        &self,
        template: TemplateId,
        sample: &str,
        messages: &[AgentMessage],
    ) -> Result<String, AgentError> {
        match self {
            AgentHandle::Http(agent) => agent.chat(messages),
            AgentHandle::Mock(agent) => agent.reply(template, sample),
        }
    }
}

/// The two independently configured agent slots: a keyword extractor and the
/// perspective/answer reasoner. A single mock typically serves both.
#[derive(Clone)]
pub struct AgentSet {
    pub extractor: AgentHandle,
    pub reasoner: AgentHandle,
}

impl AgentSet {
    pub fn mock(entries: Vec<MockEntry>) -> Self {
        let handle = AgentHandle::mock(entries);
        Self {
            extractor: handle.clone(),
            reasoner: handle,
        }
    }
}
