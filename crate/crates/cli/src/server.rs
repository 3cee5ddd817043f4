//! The pool over HTTP.
//!
//! ```text
//! GET  /random       -> 200 {"chromosome":"0101..."} | 204
//! PUT  /one          -> 200 {"size":N} | 400 {"error":"..."}
//! GET  /log          -> 200 [{"t":ms,"ip":"10.A.B.C","op":"PUT"|"GET","fitness":x|null}, ...]
//! POST /admin/reset  -> 200 {"previousEvents":N}   (with --admin, loopback only)
//! anything else      -> static directory, if configured
//! ```

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde::Deserialize;
use tower_http::services::ServeDir;

use poolea_core::pool::{Anonymizer, LogSink, NdjsonLogFile};
use poolea_core::{wire, ExperimentConfig, ExperimentState, TrapSpec};

use crate::config::ServeConfig;

pub struct ServerState {
    experiment: Mutex<ExperimentState>,
    trust_forwarded_for: bool,
}

impl ServerState {
    pub fn new(experiment: ExperimentState, trust_forwarded_for: bool) -> Self {
        Self {
            experiment: Mutex::new(experiment),
            trust_forwarded_for,
        }
    }

    fn lock(&self) -> MutexGuard<'_, ExperimentState> {
        // A handler never panics while holding the lock; recover anyway.
        self.experiment.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn client_address(&self, peer: SocketAddr, headers: &HeaderMap) -> String {
        if self.trust_forwarded_for {
            let forwarded = headers
                .get("x-forwarded-for")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.split(',').next())
                .map(str::trim)
                .filter(|v| !v.is_empty());
            if let Some(address) = forwarded {
                return address.to_owned();
            }
        }
        peer.ip().to_string()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn json(status: StatusCode, body: String) -> Response {
    let mut response = (status, body).into_response();
    response.headers_mut().insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/json"),
    );
    response
}

async fn get_random(
    State(state): State<Arc<ServerState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
) -> Response {
    let client = state.client_address(peer, &headers);
    let picked = state.lock().handle_get_random(&client, now_ms());
    match picked {
        Some(c) => json(StatusCode::OK, wire::encode_chromosome_body(&c)),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn put_one(
    State(state): State<Arc<ServerState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let client = state.client_address(peer, &headers);
    let outcome = state.lock().handle_put_body(&client, &body, now_ms());
    match outcome {
        Ok(size) => json(StatusCode::OK, wire::encode_size_body(size)),
        Err(e) => {
            tracing::debug!(%client, error = %e, "rejected PUT");
            bad_request(e.to_string())
        }
    }
}

async fn get_log(State(state): State<Arc<ServerState>>) -> Response {
    let snapshot = state.lock().log().to_vec();
    json(StatusCode::OK, wire::encode_log(&snapshot))
}

/// Body of `POST /admin/reset`; absent fields keep their current values.
#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct ResetRequest {
    trap_length: Option<usize>,
    traps: Option<usize>,
    seed_count: Option<usize>,
    capacity: Option<usize>,
    seed: Option<u64>,
}

impl ResetRequest {
    fn apply(self, current: &ExperimentConfig) -> poolea_core::Result<ExperimentConfig> {
        let spec = TrapSpec::new(
            self.trap_length.unwrap_or(current.spec.trap_length()),
            self.traps.unwrap_or(current.spec.trap_count()),
        )?;
        let config = ExperimentConfig {
            spec,
            seed_count: self.seed_count.unwrap_or(current.seed_count),
            capacity: self.capacity.or(current.capacity),
            seed: self.seed.unwrap_or(current.seed),
        };
        config.validate()?;
        Ok(config)
    }
}

async fn reset(
    State(state): State<Arc<ServerState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Bytes,
) -> Response {
    if !peer.ip().is_loopback() {
        return StatusCode::FORBIDDEN.into_response();
    }
    let request = if body.iter().all(u8::is_ascii_whitespace) {
        ResetRequest::default()
    } else {
        match serde_json::from_slice::<ResetRequest>(&body) {
            Ok(r) => r,
            Err(e) => return bad_request(e.to_string()),
        }
    };
    let mut experiment = state.lock();
    let config = match request.apply(experiment.config()) {
        Ok(c) => c,
        Err(e) => return bad_request(e.to_string()),
    };
    let previous = experiment.reset(config, now_ms());
    if experiment.sink_errors() > 0 {
        tracing::warn!(errors = experiment.sink_errors(), "log file writes failed");
    }
    tracing::info!(previous_events = previous.len(), "experiment reset");
    json(
        StatusCode::OK,
        serde_json::json!({ "previousEvents": previous.len() }).to_string(),
    )
}

fn bad_request(message: String) -> Response {
    json(
        StatusCode::BAD_REQUEST,
        serde_json::json!({ "error": message }).to_string(),
    )
}

pub fn router(state: Arc<ServerState>, admin: bool, static_dir: Option<&Path>) -> Router {
    let mut app = Router::new()
        .route("/random", get(get_random))
        .route("/one", put(put_one))
        .route("/log", get(get_log));
    if admin {
        app = app.route("/admin/reset", post(reset));
    }
    let app = app.with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Builds the experiment with its log file. An existing non-empty log is
/// archived first, since a fresh server means a fresh experiment.
pub fn initial_state(config: &ServeConfig) -> Result<ServerState> {
    let mut sink = NdjsonLogFile::open(&config.log_path)
        .with_context(|| format!("opening {}", config.log_path.display()))?;
    sink.start_experiment()
        .with_context(|| format!("archiving {}", config.log_path.display()))?;
    let anonymizer = match config.anonymizer_seed {
        Some(seed) => Anonymizer::from_seed(seed),
        None => Anonymizer::new(rand::random()),
    };
    let experiment = ExperimentState::new(config.experiment.clone(), anonymizer, now_ms())
        .with_sink(Box::new(sink));
    Ok(ServerState::new(experiment, config.trust_forwarded_for))
}

/// Serves until interrupted. Prints `listening on <addr>` once bound.
pub fn run(config: ServeConfig) -> Result<()> {
    let state = Arc::new(initial_state(&config)?);
    let app = router(state, config.admin, config.static_dir.as_deref());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        let bound = listener.local_addr()?;
        println!("listening on {bound}");
        tracing::info!(%bound, admin = config.admin, "pool server started");
        axum::serve(
            listener,
            app.into_make_service_with_connect_info::<SocketAddr>(),
        )
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
