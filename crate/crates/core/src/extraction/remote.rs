//! Chat-completion client for hosted models speaking the common
//! `/chat/completions` JSON protocol.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::backend::{Backend, BackendRequest, CallError};

pub struct RemoteBackend {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct Completion {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, CallError> {
        let body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.decode_params.temperature,
            "max_tokens": request.decode_params.max_answer_length,
        });
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match response {
            Ok(resp) => {
                let parsed: Completion = resp
                    .into_json()
                    .map_err(|e| CallError::Transient(format!("unreadable response: {e}")))?;
                let msg = parsed.choices.into_iter().next().map(|c| c.message);
                Ok(match msg {
                    Some(Message {
                        refusal: Some(_), ..
                    }) => String::new(),
                    Some(m) => m.content.unwrap_or_default(),
                    None => String::new(),
                })
            }
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(CallError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                Err(CallError::Fatal(format!("HTTP {code}: {}", detail.trim())))
            }
            Err(ureq::Error::Transport(t)) => Err(CallError::Transient(t.to_string())),
        }
    }
}
