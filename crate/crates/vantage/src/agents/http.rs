//! Chat-completions HTTP transport: one POST per call, text and image parts
//! (images as base64 data URIs), first-choice text out. Timeouts and 5xx
//! responses are retried with exponential backoff; 4xx responses are not.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{AgentError, AgentMessage, EndpointConfig, Role};

/// Bounds concurrent in-flight requests per agent handle.
struct Inflight {
    state: Mutex<usize>,
    cv: Condvar,
    max: usize,
}

impl Inflight {
    fn new(max: usize) -> Self {
        Self {
            state: Mutex::new(0),
            cv: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) {
        let mut count = self.state.lock().expect("inflight lock");
        while *count >= self.max {
            count = self.cv.wait(count).expect("inflight wait");
        }
        *count += 1;
    }

    fn release(&self) {
        let mut count = self.state.lock().expect("inflight lock");
        *count -= 1;
        self.cv.notify_one();
    }
}

pub struct HttpAgent {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    inflight: Inflight,
    token: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Value,
}

fn content_parts(msg: &AgentMessage) -> Value {
    let mut parts = Vec::new();
    if !msg.text.is_empty() {
        parts.push(json!({"type": "text", "text": msg.text}));
    }
    for png in &msg.images {
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        parts.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:image/png;base64,{b64}")}
        }));
    }
    Value::Array(parts)
}

fn reply_text(content: &Value) -> Option<String> {
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: String = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            Some(text)
        }
        _ => None,
    }
}

impl HttpAgent {
    pub fn new(config: EndpointConfig) -> Result<Self, AgentError> {
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                AgentError::Config(format!("auth token variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        let inflight = Inflight::new(config.max_inflight);
        Ok(Self {
            config,
            client,
            inflight,
            token,
        })
    }

    pub fn chat(&self, messages: &[AgentMessage]) -> Result<String, AgentError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages.iter().map(|m| json!({
                "role": match m.role { Role::System => "system", Role::User => "user" },
                "content": content_parts(m),
            })).collect::<Vec<_>>(),
        });

        self.inflight.acquire();
        let result = self.chat_with_retries(&body);
        self.inflight.release();
        result
    }

    fn chat_with_retries(&self, body: &Value) -> Result<String, AgentError> {
        let backoffs = &self.config.retry_backoff_ms;
        let mut attempt = 0usize;
        loop {
            match self.send_once(body) {
                Ok(text) => return Ok(text),
                Err(err) => {
                    let retryable = matches!(&err, AgentError::Transport { .. })
                        || matches!(&err, AgentError::Http { status, .. } if *status >= 500);
                    if !retryable || attempt >= backoffs.len() {
                        return Err(err);
                    }
                    log::warn!(
                        "agent call failed (attempt {}): {err}; retrying",
                        attempt + 1
                    );
                    std::thread::sleep(Duration::from_millis(backoffs[attempt]));
                    attempt += 1;
                }
            }
        }
    }

    fn send_once(&self, body: &Value) -> Result<String, AgentError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| AgentError::Transport {
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let message = resp.text().unwrap_or_default();
            let message = message.chars().take(300).collect();
            return Err(AgentError::Http { status, message });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| AgentError::Http {
            status,
            message: format!("unparseable chat response: {e}"),
        })?;
        let first = parsed.choices.first().ok_or(AgentError::Http {
            status,
            message: "chat response has no choices".to_string(),
        })?;
        reply_text(&first.message.content).ok_or(AgentError::Http {
            status,
            message: "chat response content has unsupported shape".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn fast_config(endpoint: String) -> EndpointConfig {
        EndpointConfig {
            endpoint,
            model: "test-model".into(),
            auth_token_env: None,
            timeout_secs: 5,
            max_inflight: 4,
            retry_backoff_ms: vec![10, 20],
        }
    }

    // One-shot canned HTTP server; counts requests it served.
    fn canned_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                // read until the end of headers plus whatever body arrives
                let _ = stream.read(&mut buf);
                let reason = match status {
                    200 => "OK",
                    401 => "Unauthorized",
                    500 => "Internal Server Error",
                    _ => "X",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    fn ok_body(text: &str) -> String {
        serde_json::to_string(&json!({
            "choices": [{"message": {"content": text}}]
        }))
        .unwrap()
    }

    #[test]
    fn successful_roundtrip() {
        let (endpoint, server) = canned_server(vec![(200, ok_body("hello"))]);
        let agent = HttpAgent::new(fast_config(endpoint)).unwrap();
        let reply = agent
            .chat(&[AgentMessage::user("hi".into(), vec![vec![1, 2, 3]])])
            .unwrap();
        assert_eq!(reply, "hello");
        assert_eq!(server.join().unwrap(), 1);
    }

    #[test]
    fn unauthorized_is_not_retried() {
        let (endpoint, server) = canned_server(vec![(401, "{\"error\":\"no\"}".into())]);
        let agent = HttpAgent::new(fast_config(endpoint)).unwrap();
        let err = agent
            .chat(&[AgentMessage::user("hi".into(), vec![])])
            .unwrap_err();
        match err {
            AgentError::Http { status, .. } => assert_eq!(status, 401),
            other => panic!("unexpected error {other}"),
        }
        assert_eq!(server.join().unwrap(), 1);
    }

    #[test]
    fn five_hundreds_retry_then_succeed() {
        let (endpoint, server) = canned_server(vec![
            (500, "oops".into()),
            (500, "oops".into()),
            (200, ok_body("recovered")),
        ]);
        let agent = HttpAgent::new(fast_config(endpoint)).unwrap();
        let reply = agent.chat(&[AgentMessage::user("hi".into(), vec![])]).unwrap();
        assert_eq!(reply, "recovered");
        assert_eq!(server.join().unwrap(), 3);
    }

    #[test]
    fn unreachable_endpoint_fails_after_retries() {
        // a port beyond the listener we just dropped: connection refused
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let agent = HttpAgent::new(fast_config(format!("http://{addr}/chat"))).unwrap();
        let err = agent
            .chat(&[AgentMessage::user("hi".into(), vec![])])
            .unwrap_err();
        assert!(matches!(err, AgentError::Transport { .. }), "{err}");
    }

    #[test]
    fn array_content_concatenates_text_parts() {
        let body = serde_json::to_string(&json!({
            "choices": [{"message": {"content": [
                {"type": "text", "text": "part one "},
                {"type": "text", "text": "part two"}
            ]}}]
        }))
        .unwrap();
        let (endpoint, _server) = canned_server(vec![(200, body)]);
        let agent = HttpAgent::new(fast_config(endpoint)).unwrap();
        let reply = agent.chat(&[AgentMessage::user("hi".into(), vec![])]).unwrap();
        assert_eq!(reply, "part one part two");
    }
}
