//! HTTP front end for the experiment runners plus the framed-TCP party server.
//!
//! `POST /v1/{command}` takes the command's config as a JSON object (missing fields take their
//! defaults) and answers with the report as JSON, or as CSV with `?format=csv`.

use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use sectrain_core::experiments::{self, ExperimentConfig, Table};
use sectrain_core::party::serve;
use sectrain_core::transport::Endpoint;
use sectrain_core::Error;

pub const COMMANDS: [&str; 5] = ["counts", "bench-he", "ablate", "breakdown", "train"];

#[derive(Clone)]
pub struct AppState {
    /// Experiments run one at a time so timings do not contend for cores.
    runs: Arc<Semaphore>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState { runs: Arc::new(Semaphore::new(1)) }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/commands", get(|| async { Json(json!(COMMANDS)) }))
        .route("/v1/{command}", post(run_command))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Debug, Default, Deserialize)]
pub struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Params(_)
            | Error::Contract(_)
            | Error::Backend(_)
            | Error::Partition(_)
            | Error::PackingOverflow { .. }
            | Error::Overflow(_)
            | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::Remote(_) | Error::ChannelClosed => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

/// Turns a command name and its JSON config into a tagged experiment config.
pub fn parse_config(command: &str, body: Value) -> Result<ExperimentConfig, ApiError> {
    if !COMMANDS.contains(&command) {
        return Err(ApiError {
            status: StatusCode::NOT_FOUND,
            message: format!("unknown command {command:?}; expected one of {}", COMMANDS.join(", ")),
        });
    }
    let mut obj = match body {
        Value::Object(m) => m,
        Value::Null => Default::default(),
        _ => return Err(ApiError::bad_request("config must be a JSON object")),
    };
    obj.insert("command".into(), Value::String(command.into()));
    serde_json::from_value(Value::Object(obj)).map_err(|e| ApiError::bad_request(format!("bad {command} config: {e}")))
}

async fn run_command(
    State(state): State<AppState>,
    Path(command): Path<String>,
    Query(q): Query<FormatQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(f) => return Err(ApiError::bad_request(format!("unknown format {f:?}"))),
    };
    let body = if body.iter().all(u8::is_ascii_whitespace) {
        Value::Null
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("body is not JSON: {e}")))?
    };
    let cfg = parse_config(&command, body)?;
    let _permit = state.runs.acquire().await.expect("semaphore is never closed");
    tracing::info!(command, "running experiment");
    let report = tokio::task::spawn_blocking(move || experiments::run(&cfg))
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() })??;
    if csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
    } else {
        Ok(Json(report).into_response())
    }
}

/// Accepts party connections on `addr` and serves each on its own thread.
pub fn spawn_party_listener(addr: &str) -> io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let handle = thread::spawn(move || {
        for stream in listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!(error = %e, "party accept failed");
                    continue;
                }
            };
            let peer = stream.peer_addr().ok();
            thread::spawn(move || {
                let result = Endpoint::from_stream(stream).and_then(|mut ep| serve(&mut ep));
                match result {
                    Ok(s) => tracing::info!(?peer, requests = s.requests, errors = s.errors, "party session done"),
                    Err(e) => tracing::warn!(?peer, error = %e, "party session failed"),
                }
            });
        }
    });
    Ok((local, handle))
}
