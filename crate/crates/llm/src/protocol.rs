//! Chat-completions wire types.

use linksteal_core::prompt::{Message, RecordMeta};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RecordMeta>,
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn completion_text(body: &[u8]) -> Result<String, String> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| format!("response is not JSON: {e}"))?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| "response lacks choices[0].message.content".to_string())
}

pub fn completion_body(model: &str, content: &str) -> serde_json::Value {
    serde_json::json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop"
        }]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_content() {
        let body = completion_body("m", "Yes").to_string();
        assert_eq!(completion_text(body.as_bytes()).unwrap(), "Yes");
        assert!(completion_text(br#"{"choices":[{"text":"Yes"}]}"#).is_err());
        assert!(completion_text(b"not json").is_err());
    }
}
