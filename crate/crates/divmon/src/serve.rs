//! HTTP ingestion service.
//!
//! Requests may arrive concurrently but every event passes through one
//! mutex-guarded [`Service`], so state changes follow arrival order.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use divmon_core::{ClassEvaluation, IngestOutcome, MonitorConfig, MonitorState, PredictionEvent};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::error::{Error, Result};
use crate::events::{EventRecord, RowError};
use crate::report::{alert_json_line, ReportBundle};
use crate::snapshot::StateSnapshot;

/// Monitor state plus everything it has emitted.
pub struct Service {
    state: MonitorState,
    evaluations: Vec<ClassEvaluation>,
    alert_lines: u64,
    alert_log: Option<PathBuf>,
}

impl Service {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        Ok(Self {
            state: MonitorState::new(config)?,
            evaluations: Vec::new(),
            alert_lines: 0,
            alert_log: None,
        })
    }

    pub fn restore(snapshot: StateSnapshot, config: &MonitorConfig) -> Result<Self> {
        let (state, evaluations, alert_lines) = snapshot.restore(config)?;
        Ok(Self {
            state,
            evaluations,
            alert_lines,
            alert_log: None,
        })
    }

    /// Appends alert lines to `path` as windows close.
    pub fn with_alert_log(mut self, path: PathBuf) -> Self {
        self.alert_log = Some(path);
        self
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn evaluations(&self) -> &[ClassEvaluation] {
        &self.evaluations
    }

    pub fn submit(&mut self, events: &[PredictionEvent]) -> Result<Vec<IngestOutcome>> {
        let mut outcomes = Vec::with_capacity(events.len());
        for e in events {
            let report = self.state.ingest(e)?;
            self.record(report.evaluations)?;
            outcomes.push(report.outcome);
        }
        Ok(outcomes)
    }

    fn record(&mut self, evaluations: Vec<ClassEvaluation>) -> Result<()> {
        let mut lines = String::new();
        for ev in &evaluations {
            for alert in &ev.evaluation.alerts {
                lines.push_str(&alert_json_line(&ev.class_label, alert));
                lines.push('\n');
                self.alert_lines += 1;
            }
        }
        if let (Some(path), false) = (&self.alert_log, lines.is_empty()) {
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(lines.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        self.evaluations.extend(evaluations);
        Ok(())
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot::capture(&self.state, &self.evaluations, self.alert_lines)
    }

    pub fn status(&self) -> Value {
        let classes: serde_json::Map<String, Value> = self
            .state
            .classes()
            .iter()
            .map(|(label, class)| {
                let (window, counts) = match class.open_window() {
                    Some(acc) => (
                        Value::from(acc.window().label.clone()),
                        acc.histograms()
                            .iter()
                            .map(|(m, h)| (m.clone(), Value::from(h.total())))
                            .collect(),
                    ),
                    None => (Value::Null, serde_json::Map::new()),
                };
                (
                    label.clone(),
                    json!({ "window": window, "sample_counts": counts, "last_closed": class.last_closed() }),
                )
            })
            .collect();
        let d = self.state.diagnostics();
        json!({
            "classes": classes,
            "diagnostics": {
                "accepted": d.accepted,
                "duplicate": d.duplicate,
                "late": d.late,
                "unregistered": d.unregistered,
                "pre_epoch": d.pre_epoch,
                "out_of_range": d.out_of_range,
                "windows_closed": d.windows_closed,
            },
            "alerts": self.alert_lines,
        })
    }

    fn bundle(&self, window: Option<&str>) -> ReportBundle {
        ReportBundle {
            evaluations: self
                .evaluations
                .iter()
                .filter(|e| window.is_none_or(|w| e.evaluation.window.label == w))
                .cloned()
                .collect(),
            diagnostics: *self.state.diagnostics(),
            row_errors: Vec::new(),
        }
    }

    pub fn readings_json(&self, window: Option<&str>) -> String {
        self.bundle(window).readings_json()
    }

    pub fn alerts_jsonl(&self) -> String {
        self.bundle(None).alerts_jsonl()
    }
}

pub type Shared = Arc<Mutex<Service>>;

/// Parses one JSON event or an array of them. Any bad record rejects the
/// whole request, with errors positioned by array index.
pub fn parse_json_events(body: &[u8]) -> std::result::Result<Vec<PredictionEvent>, Vec<RowError>> {
    let value: Value = serde_json::from_slice(body).map_err(|e| {
        vec![RowError {
            row: 0,
            message: format!("invalid JSON: {e}"),
        }]
    })?;
    let items = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    let mut events = Vec::with_capacity(items.len());
    let mut errors = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        let parsed = serde_json::from_value::<EventRecord>(item)
            .map_err(|e| e.to_string())
            .and_then(EventRecord::into_event);
        match parsed {
            Ok(e) => events.push(e),
            Err(message) => errors.push(RowError {
                row: i as u64,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(events)
    } else {
        Err(errors)
    }
}

async fn post_predictions(State(shared): State<Shared>, body: Bytes) -> Response {
    let events = match parse_json_events(&body) {
        Ok(events) => events,
        Err(errors) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
        }
    };
    let mut service = shared.lock().await;
    match service.submit(&events) {
        Ok(outcomes) => {
            let outcomes: Vec<String> = outcomes
                .iter()
                .map(|o| format!("{o:?}").to_lowercase())
                .collect();
            (
                StatusCode::ACCEPTED,
                Json(json!({ "received": events.len(), "outcomes": outcomes })),
            )
                .into_response()
        }
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": e.to_string() })),
        )
            .into_response(),
    }
}

async fn get_status(State(shared): State<Shared>) -> Json<Value> {
    Json(shared.lock().await.status())
}

#[derive(Deserialize)]
struct ReadingsQuery {
    window: Option<String>,
}

async fn get_readings(State(shared): State<Shared>, Query(q): Query<ReadingsQuery>) -> Response {
    let body = shared.lock().await.readings_json(q.window.as_deref());
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_alerts(State(shared): State<Shared>) -> Response {
    let body = shared.lock().await.alerts_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub fn router(shared: Shared) -> Router {
    Router::new()
        .route("/v1/predictions", post(post_predictions))
        .route("/v1/status", get(get_status))
        .route("/v1/readings", get(get_readings))
        .route("/v1/alerts", get(get_alerts))
        .with_state(shared)
}

/// Builds the service, restoring from `snapshot` when it exists unless
/// `fresh` is set. A snapshot from another configuration is refused.
pub fn open_service(
    config: &MonitorConfig,
    snapshot: Option<&Path>,
    fresh: bool,
) -> Result<Service> {
    match snapshot {
        Some(path) if !fresh && path.exists() => {
            Service::restore(StateSnapshot::read(path)?, config)
        }
        _ => Service::new(config.clone()),
    }
}

pub struct ServeOptions {
    pub listen: SocketAddr,
    pub snapshot: Option<PathBuf>,
    pub fresh: bool,
    pub alert_log: Option<PathBuf>,
}

/// Runs until ctrl-c / SIGTERM, then writes the snapshot (if configured).
pub async fn serve(config: MonitorConfig, opts: ServeOptions) -> Result<()> {
    let mut service = open_service(&config, opts.snapshot.as_deref(), opts.fresh)?;
    if let Some(path) = opts.alert_log {
        service = service.with_alert_log(path);
    }
    let shared: Shared = Arc::new(Mutex::new(service));
    let listener = tokio::net::TcpListener::bind(opts.listen)
        .await
        .map_err(|e| Error::io(opts.listen.to_string(), e))?;
    eprintln!(
        "listening on {}",
        listener
            .local_addr()
            .map_err(|e| Error::io("listener", e))?
    );
    axum::serve(listener, router(shared.clone()))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| Error::io("server", e))?;
    if let Some(path) = &opts.snapshot {
        shared.lock().await.snapshot().write(path)?;
        eprintln!("snapshot written to {}", path.display());
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
