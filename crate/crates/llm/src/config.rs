use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Server root; requests go to `{base_url}/v1/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Sent as `Authorization: Bearer …` when set.
    pub api_key: Option<String>,
    /// Attach `{dataset, u, v, question_kind}` to each request so mock
    /// servers can identify the pair. Real endpoints ignore unknown fields.
    pub send_metadata: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8089".into(),
            model_name: "linksteal-mock".into(),
            temperature: 0.0,
            max_tokens: 8,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 200,
            max_in_flight: 4,
            api_key: None,
            send_metadata: true,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        if self.max_in_flight < 1 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}
