use std::time::Duration;

use futures::stream::{self, StreamExt};
use linksteal_core::eval::Prediction;
use linksteal_core::prompt::PromptRecord;

use crate::config::EndpointConfig;
use crate::protocol::{completion_text, ChatRequest};
use crate::verdict::{parse_verdict, Verdict, VerdictKind};
use crate::LlmError;

/// Verdicts aligned with the submitted records.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRun {
    pub verdicts: Vec<Verdict>,
}

impl AttackRun {
    pub fn predictions(&self) -> Vec<Prediction> {
        self.verdicts.iter().map(Verdict::prediction).collect()
    }

    pub fn unparseable(&self) -> usize {
        self.verdicts.iter().filter(|v| v.kind == VerdictKind::Unparseable).count()
    }
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: EndpointConfig,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Client(e.to_string()))?;
        Ok(ChatClient { http, config })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn request_for(&self, record: &PromptRecord) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages: record.messages.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            metadata: self.config.send_metadata.then(|| record.meta.clone()),
        }
    }

    /// Sends one inference record, retrying transport failures and 5xx
    /// answers with exponential backoff.
    pub async fn query_verdict(&self, record: &PromptRecord) -> Result<Verdict, LlmError> {
        if !record.is_inference() {
            return Err(LlmError::NotInference(0));
        }
        let body = self.request_for(record);
        let url = self.config.completions_url();
        let mut last_status = None;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                tokio::time::sleep(self.config.backoff(attempt - 1)).await;
            }
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send().await {
                Ok(r) => r,
                Err(e) => {
                    last = format!("transport: {e}");
                    continue;
                }
            };
            let status = resp.status();
            let bytes = match resp.bytes().await {
                Ok(b) => b,
                Err(e) => {
                    last = format!("reading body: {e}");
                    continue;
                }
            };
            if status.is_server_error() {
                last_status = Some(status.as_u16());
                last = format!("HTTP {status}");
                log::debug!("attempt {attempt}: {last}");
                continue;
            }
            if !status.is_success() {
                return Err(LlmError::HttpStatus { status: status.as_u16(), body: String::from_utf8_lossy(&bytes).into_owned() });
            }
            let text = completion_text(&bytes).map_err(LlmError::Protocol)?;
            return Ok(parse_verdict(&text));
        }
        Err(LlmError::RetriesExhausted { attempts: self.config.max_retries + 1, last_status, last })
    }

    /// Queries every record with at most `max_in_flight` requests open.
    /// Output order matches input order.
    pub async fn run_attack(&self, records: &[PromptRecord]) -> Result<AttackRun, LlmError> {
        if let Some(i) = records.iter().position(|r| !r.is_inference()) {
            return Err(LlmError::NotInference(i));
        }
        let results: Vec<Result<Verdict, LlmError>> = stream::iter(records)
            .map(|r| self.query_verdict(r))
            .buffered(self.config.max_in_flight)
            .collect()
            .await;
        let mut verdicts = Vec::with_capacity(records.len());
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => verdicts.push(v),
                Err(e) => failures.push((i, e.to_string())),
            }
        }
        if !failures.is_empty() {
            return Err(LlmError::Batch { failures });
        }
        Ok(AttackRun { verdicts })
    }
}
