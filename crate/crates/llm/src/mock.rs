use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use linksteal_core::baselines::{pair_distance, MetricKind};
use linksteal_core::gnn::PosteriorMatrix;
use linksteal_core::prompt::RecordMeta;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::protocol::{completion_body, ChatRequest};
use crate::LlmError;

/// How the mock answers.
#[derive(Debug, Clone)]
pub enum MockMode {
    /// "Yes" iff the pair is a true edge of its dataset.
    Oracle { edges: HashMap<String, HashSet<(usize, usize)>> },
    ConstantYes,
    /// "Yes" iff the cosine distance of the two posterior rows is `≤ tau`;
    /// an undefined distance gets a non-answer.
    PosteriorCosine { tau: f64, posteriors: HashMap<String, PosteriorMatrix<f64>> },
}

impl MockMode {
    pub fn name(&self) -> &'static str {
        match self {
            MockMode::Oracle { .. } => "oracle",
            MockMode::ConstantYes => "constant-yes",
            MockMode::PosteriorCosine { .. } => "posterior-cosine",
        }
    }

    fn answer(&self, meta: Option<&RecordMeta>) -> Result<&'static str, String> {
        let need_meta = || meta.ok_or_else(|| format!("{} mode needs request metadata", self.name()));
        match self {
            MockMode::ConstantYes => Ok("Yes"),
            MockMode::Oracle { edges } => {
                let m = need_meta()?;
                let set = edges.get(&m.dataset).ok_or_else(|| format!("unknown dataset {}", m.dataset))?;
                Ok(if set.contains(&(m.u.min(m.v), m.u.max(m.v))) { "Yes" } else { "No" })
            }
            MockMode::PosteriorCosine { tau, posteriors } => {
                let m = need_meta()?;
                let p = posteriors.get(&m.dataset).ok_or_else(|| format!("unknown dataset {}", m.dataset))?;
                if m.u >= p.node_count() || m.v >= p.node_count() {
                    return Err(format!("pair ({}, {}) outside posterior matrix", m.u, m.v));
                }
                Ok(match pair_distance(MetricKind::Cosine, p.row(m.u), p.row(m.v)) {
                    Ok(d) if d <= *tau => "Yes",
                    Ok(_) => "No",
                    Err(_) => "Unsure.",
                })
            }
        }
    }
}

/// Fault injection and pacing.
#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// Answer HTTP 500 to this many requests before behaving.
    pub fail_first: usize,
    /// Delay before answering each request.
    pub latency: Duration,
    /// Reply 200 with a body that lacks the completion field.
    pub malformed_responses: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockStats {
    pub requests: usize,
    pub max_in_flight: usize,
    pub injected_failures: usize,
    pub bad_requests: usize,
}

#[derive(Default)]
struct Counters {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    injected_failures: AtomicUsize,
    bad_requests: AtomicUsize,
}

struct AppState {
    mode: MockMode,
    options: MockOptions,
    counters: Counters,
}

struct InFlight<'a>(&'a Counters);

impl<'a> InFlight<'a> {
    fn enter(c: &'a Counters) -> Self {
        let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        c.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(c)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn bad_request(state: &AppState, message: String) -> Response {
    state.counters.bad_requests.fetch_add(1, Ordering::SeqCst);
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": { "message": message } }))).into_response()
}

async fn completions(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let _guard = InFlight::enter(&state.counters);
    let n = state.counters.requests.fetch_add(1, Ordering::SeqCst);
    if !state.options.latency.is_zero() {
        tokio::time::sleep(state.options.latency).await;
    }
    if n < state.options.fail_first {
        state.counters.injected_failures.fetch_add(1, Ordering::SeqCst);
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&state, format!("malformed request: {e}")),
    };
    let answer = match state.mode.answer(request.metadata.as_ref()) {
        Ok(a) => a,
        Err(e) => return bad_request(&state, e),
    };
    if state.options.malformed_responses {
        return Json(serde_json::json!({ "choices": [{ "text": answer }] })).into_response();
    }
    Json(completion_body(&request.model, answer)).into_response()
}

/// A running mock endpoint. Dropping it without [`MockServer::shutdown`]
/// leaves the task running until the runtime stops.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> MockStats {
        let c = &self.state.counters;
        MockStats {
            requests: c.requests.load(Ordering::SeqCst),
            max_in_flight: c.max_in_flight.load(Ordering::SeqCst),
            injected_failures: c.injected_failures.load(Ordering::SeqCst),
            bad_requests: c.bad_requests.load(Ordering::SeqCst),
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Serves until the process receives Ctrl-C.
    pub async fn run_until_ctrl_c(self) {
        let _ = tokio::signal::ctrl_c().await;
        self.shutdown().await;
    }
}

/// Binds `addr` (port 0 picks a free port) and serves
/// `POST /v1/chat/completions` in the background.
pub async fn serve_mock(mode: MockMode, addr: SocketAddr, options: MockOptions) -> Result<MockServer, LlmError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| LlmError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| LlmError::Bind { addr, source })?;
    let state = Arc::new(AppState { mode, options, counters: Counters::default() });
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = server.await {
            log::error!("mock server stopped: {e}");
        }
    });
    log::info!("mock endpoint ({}) listening on {addr}", state.mode.name());
    Ok(MockServer { addr, state, shutdown: Some(tx), task })
}
