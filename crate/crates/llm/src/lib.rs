//! Chat-completion side of the attack: query an endpoint with inference
//! prompts, turn completions into Link/Unlink verdicts, and a mock server
//! speaking the same protocol.

mod client;
mod config;
mod mock;
pub mod protocol;
mod verdict;

pub use client::{AttackRun, ChatClient};
pub use config::EndpointConfig;
pub use mock::{serve_mock, MockMode, MockOptions, MockServer, MockStats};
pub use verdict::{parse_verdict, Verdict, VerdictKind};

use std::net::SocketAddr;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("endpoint configuration error: {0}")]
    Config(String),
    #[error("record {0} already carries an assistant answer; only inference records can be sent")]
    NotInference(usize),
    #[error("gave up after {attempts} attempts; last failure: {last}")]
    RetriesExhausted { attempts: u32, last_status: Option<u16>, last: String },
    #[error("endpoint answered HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{} of the requests failed: {}", .failures.len(), summarize(.failures))]
    Batch { failures: Vec<(usize, String)> },
    #[error("cannot bind mock server to {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("http client: {0}")]
    Client(String),
}

fn summarize(failures: &[(usize, String)]) -> String {
    let shown: Vec<String> = failures.iter().take(5).map(|(i, e)| format!("#{i}: {e}")).collect();
    let more = failures.len().saturating_sub(5);
    if more > 0 {
        format!("{} (+{more} more)", shown.join("; "))
    } else {
        shown.join("; ")
    }
}
