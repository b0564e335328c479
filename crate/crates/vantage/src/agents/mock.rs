//! Scripted agent for offline deterministic runs. Replies are keyed by
//! (template, call index), optionally narrowed to a single sample id so
//! parallel evaluation stays deterministic regardless of scheduling.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::templates::TemplateId;
use super::AgentError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEntry {
    pub template: TemplateId,
    /// Call index within (template, sample); the counter starts at 0 per
    /// sample, so one generic script line serves every sample.
    pub index: usize,
    /// When set, the entry only applies to this sample id. Sample-specific
    /// entries win over generic ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<String>,
    pub reply: String,
}

/// Deterministic scripted agent.
pub struct MockAgent {
    entries: Vec<MockEntry>,
    counters: Mutex<HashMap<(TemplateId, String), usize>>,
}

impl MockAgent {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        Self {
            entries,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_script(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AgentError::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        let entries: Vec<MockEntry> = serde_json::from_str(&text).map_err(|e| {
            AgentError::Config(format!("malformed mock script {}: {e}", path.display()))
        })?;
        Ok(Self::new(entries))
    }

    pub fn reply(&self, template: TemplateId, sample: &str) -> Result<String, AgentError> {
        let mut counters = self.counters.lock().expect("mock counter lock");
        let key = (template, sample.to_string());
        let index = *counters.get(&key).unwrap_or(&0);
        counters.insert(key, index + 1);
        drop(counters);

        let specific = self.entries.iter().find(|e| {
            e.template == template && e.index == index && e.sample.as_deref() == Some(sample)
        });
        let generic = self
            .entries
            .iter()
            .find(|e| e.template == template && e.index == index && e.sample.is_none());
        specific
            .or(generic)
            .map(|e| e.reply.clone())
            .ok_or(AgentError::MockExhausted {
                template,
                sample: sample.to_string(),
                index,
            })
    }

    /// Forget all per-sample call counters.
    pub fn reset(&self) {
        self.counters.lock().expect("mock counter lock").clear();
    }
}
