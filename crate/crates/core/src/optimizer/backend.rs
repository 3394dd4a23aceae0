//! Text-completion backends: a live HTTP endpoint or a scripted mock.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Separator line between responses in a mock script.
pub const MOCK_SEPARATOR: &str = "--- response ---";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("request failed: {0}")]
    Network(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend response is not usable: {0}")]
    Protocol(String),
    #[error("mock script exhausted after {0} response(s)")]
    Exhausted(usize),
    #[error("cannot load mock script {path}: {message}")]
    Script { path: String, message: String },
}

/// Anything that turns a prompt into a completion.
pub trait Backend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError>;
}

/// Replays a fixed list of responses in order, one per call.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    responses: VecDeque<String>,
    served: usize,
}

impl MockBackend {
    pub fn new(responses: Vec<String>) -> Self {
        MockBackend {
            responses: responses.into(),
            served: 0,
        }
    }

    /// Split a script into responses at lines equal to [`MOCK_SEPARATOR`].
    /// Text before the first separator is ignored when the script starts with
    /// one; otherwise it is the first response.
    pub fn parse_script(text: &str) -> Self {
        let mut responses = Vec::new();
        let mut current = String::new();
        let mut seen_separator = false;
        for line in text.lines() {
            if line.trim_end() == MOCK_SEPARATOR {
                if seen_separator || !current.trim().is_empty() {
                    responses.push(std::mem::take(&mut current));
                }
                current.clear();
                seen_separator = true;
            } else {
                current.push_str(line);
                current.push('\n');
            }
        }
        if !current.trim().is_empty() {
            responses.push(current);
        }
        MockBackend::new(responses)
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Script {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::parse_script(&text))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }
}

impl Backend for MockBackend {
    fn complete(&mut self, _prompt: &str) -> Result<String, BackendError> {
        match self.responses.pop_front() {
            Some(r) => {
                self.served += 1;
                Ok(r)
            }
            None => Err(BackendError::Exhausted(self.served)),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model_name: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Response {
    text: String,
}

/// Single-turn JSON-over-HTTP backend: POSTs `{"model_name", "prompt"}` and
/// reads the completion from the response's `text` field.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model_name: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: &str, model_name: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.to_string(),
            model_name: model_name.to_string(),
            api_key,
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&mut self, prompt: &str) -> Result<String, BackendError> {
        let mut request = self.client.post(&self.endpoint).json(&Request {
            model_name: &self.model_name,
            prompt,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Network(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let parsed: Response = response.json().map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(parsed.text)
    }
}
