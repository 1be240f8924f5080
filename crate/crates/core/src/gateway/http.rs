//! OpenAI-compatible `/v1/completions` backend.

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{AttemptError, Backend, BackendConfig, CompletionRequest};

pub struct HttpBackend {
    agent: Agent,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<Message>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl HttpBackend {
    /// Reads the bearer token from [`super::API_KEY_ENV`] when set.
    pub fn new(config: &BackendConfig) -> Self {
        let api_key = std::env::var(super::API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: &BackendConfig, api_key: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            endpoint: config.endpoint_url.clone(),
            api_key,
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn attempt(&self, request: &CompletionRequest, config: &BackendConfig) -> Result<String, AttemptError> {
        let body = json!({
            "model": config.model_name,
            "prompt": request.prompt,
            "max_tokens": config.max_new_tokens,
            "temperature": config.temperature,
            "n": 1,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_)
            | ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound => AttemptError::Transient(e.to_string()),
            other => AttemptError::Fatal(other.to_string()),
        })?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(AttemptError::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(AttemptError::Fatal(format!("HTTP {status}: {}", detail.trim())));
        }
        let parsed: CompletionBody = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Fatal(format!("malformed completion body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Fatal("completion has no choices".into()))?;
        Ok(choice
            .text
            .or_else(|| choice.message.and_then(|m| m.content))
            .unwrap_or_default())
    }
}
