//! Chat-client capability: the one seam between the administration protocol
//! and the outside world. The HTTP implementation speaks the ubiquitous
//! chat-completions wire format; the simulant implements the same trait
//! without any network.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{ProtocolConfig, TranscriptKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

/// Decoding controls pinned per request and recorded verbatim in every
/// transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
}

/// A fully built chat request: messages plus decoding, independent of the
/// transport.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub decoding: DecodingConfig,
}

#[derive(Debug, Error)]
pub enum ClientError {
    /// Credentials rejected; aborts the whole run.
    #[error("endpoint rejected authentication: {0}")]
    Auth(String),
    /// Worth retrying: timeouts, rate limits, 5xx, connection drops.
    #[error("transient endpoint failure: {0}")]
    Transient(String),
    /// Not worth retrying: malformed request/response, unknown model, or an
    /// unrecognized request reaching the simulant.
    #[error("permanent endpoint failure: {0}")]
    Permanent(String),
}

/// Capability interface for completing one chat exchange. The key carries
/// the (persona, measure, item, repetition, phase) identity of the request;
/// network clients ignore it, the simulant derives its deterministic noise
/// streams from it.
pub trait ChatClient: Send + Sync {
    fn complete(&self, key: &TranscriptKey, request: &ChatRequest) -> Result<String, ClientError>;
}

/// Blocking HTTP client for chat-completions endpoints.
///
/// POSTs to `<endpoint_url>/chat/completions` (the suffix is appended unless
/// already present) with the standard messages/temperature/top_p/seed body
/// and reads `choices[0].message.content`.
pub struct HttpChatClient {
    http: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: &ProtocolConfig, api_key: Option<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ClientError::Permanent(format!("cannot build HTTP client: {e}")))?;
        let base = config.endpoint_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(HttpChatClient { http, url, api_key })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, _key: &TranscriptKey, request: &ChatRequest) -> Result<String, ClientError> {
        let mut body = json!({
            "model": request.decoding.model_id,
            "messages": request.messages,
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
            "max_tokens": request.decoding.max_tokens,
        });
        if let Some(seed) = request.decoding.request_seed {
            body["seed"] = json!(seed);
        }

        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transient(format!("request failed: {e}")))?;

        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ClientError::Auth(format!("HTTP {status}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ClientError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Permanent(format!("HTTP {status}")));
        }

        let parsed: serde_json::Value = resp
            .json()
            .map_err(|e| ClientError::Permanent(format!("invalid JSON response: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                ClientError::Permanent("response has no choices[0].message.content".into())
            })
    }
}
