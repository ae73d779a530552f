//! HTTP front end and watch-folder poller. Both translate submissions into
//! events and hand them to a bounded worker pool; replies come back over a
//! oneshot channel.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch, Semaphore};
use tokio::task::{JoinHandle, JoinSet};

use super::{
    derive_submission_id, ArtifactKind, ArtifactStore, Pipeline, PipelineError, ProcessingOutcome,
    Reader, SubmissionEvent,
};
use crate::transcript::TranscriptFormat;

const QUEUE_DEPTH: usize = 256;

struct Job {
    event: SubmissionEvent,
    reply: oneshot::Sender<Result<ProcessingOutcome, PipelineError>>,
}

#[derive(Clone)]
struct AppState {
    pipeline: Arc<Pipeline>,
    queue: mpsc::Sender<Job>,
}

/// Running service. Dropping it without calling [`ServiceHandle::shutdown`]
/// leaves the tasks running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting requests, finishes queued work and waits for it.
    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.stop.send(true);
        self.task.await.map_err(std::io::Error::other)?
    }
}

fn now() -> i64 {
    chrono::Utc::now().timestamp()
}

fn router(pipeline: Arc<Pipeline>, queue: mpsc::Sender<Job>) -> Router {
    Router::new()
        .route("/submissions", post(submit))
        .route("/reports/{key}", get(report))
        .route("/healthz", get(|| async { Json(json!({"status": "ok"})) }))
        .with_state(AppState { pipeline, queue })
}

/// Starts the HTTP server, the worker pool and (if configured) the watch
/// folder poller on an already bound listener.
pub async fn start(pipeline: Arc<Pipeline>, listener: TcpListener) -> std::io::Result<ServiceHandle> {
    let addr = listener.local_addr()?;
    let cfg = pipeline.config().clone();
    let (queue, jobs) = mpsc::channel(QUEUE_DEPTH);
    let (stop, stopped) = watch::channel(false);

    let workers = tokio::spawn(dispatch(jobs, pipeline.clone(), cfg.worker_limit));
    let poller = cfg.watch_dir.clone().map(|dir| {
        tokio::spawn(poll_watch_dir(
            dir,
            Duration::from_secs(cfg.poll_interval_secs),
            pipeline.clone(),
            queue.clone(),
            stopped.clone(),
        ))
    });
    let app = router(pipeline, queue);
    let mut server_stop = stopped;

    let task = tokio::spawn(async move {
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = server_stop.wait_for(|s| *s).await;
            })
            .await;
        if let Some(p) = poller {
            let _ = p.await;
        }
        // every queue sender is gone now, so the pool drains and exits
        let _ = workers.await;
        tracing::info!("service stopped");
        served
    });
    tracing::info!(%addr, "listening");
    Ok(ServiceHandle { addr, stop, task })
}

/// Blocking entry point for the CLI: serve until Ctrl-C.
pub fn run(pipeline: Pipeline) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let port = pipeline.config().port;
        let listener = TcpListener::bind(("0.0.0.0", port)).await?;
        let handle = start(Arc::new(pipeline), listener).await?;
        tokio::signal::ctrl_c().await?;
        tracing::info!("shutting down");
        handle.shutdown().await
    })
}

async fn dispatch(mut jobs: mpsc::Receiver<Job>, pipeline: Arc<Pipeline>, limit: usize) {
    let permits = Arc::new(Semaphore::new(limit));
    let mut running = JoinSet::new();
    while let Some(job) = jobs.recv().await {
        let permit = permits.clone().acquire_owned().await.expect("semaphore never closed");
        let pipeline = pipeline.clone();
        running.spawn_blocking(move || {
            let result = pipeline.handle_submission(&job.event);
            drop(permit);
            let _ = job.reply.send(result);
        });
        while running.try_join_next().is_some() {}
    }
    while running.join_next().await.is_some() {}
}

async fn enqueue(
    queue: &mpsc::Sender<Job>,
    event: SubmissionEvent,
) -> Result<ProcessingOutcome, PipelineError> {
    let (reply, rx) = oneshot::channel();
    let gone = || PipelineError::Store(super::StoreError::Corrupt("worker pool stopped".into()));
    queue.send(Job { event, reply }).await.map_err(|_| gone())?;
    rx.await.map_err(|_| gone())?
}

fn error_body(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

fn bad_request(reason: impl Into<String>) -> Response {
    error_body(StatusCode::BAD_REQUEST, json!({"error": reason.into()}))
}

fn pipeline_error(e: PipelineError) -> Response {
    match e {
        PipelineError::DeadLettered {
            submission_id,
            stage,
            message,
            dead_letter_key,
        } => {
            let status = match stage.as_str() {
                "store" | "payload" => StatusCode::INTERNAL_SERVER_ERROR,
                "evaluate" => StatusCode::BAD_GATEWAY,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            error_body(
                status,
                json!({
                    "error": message,
                    "stage": stage,
                    "submission_id": submission_id,
                    "dead_letter_key": dead_letter_key,
                }),
            )
        }
        PipelineError::Conflict(id) => error_body(
            StatusCode::CONFLICT,
            json!({"error": "submission_id already used with a different payload", "submission_id": id}),
        ),
        PipelineError::InvalidSubmission(reason) => bad_request(reason),
        other => error_body(
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({"error": other.to_string()}),
        ),
    }
}

#[derive(Default)]
struct Upload {
    submission_id: Option<String>,
    student_pseudonym: Option<String>,
    week_id: Option<String>,
    format: Option<String>,
    file: Option<Vec<u8>>,
}

async fn read_upload(mut mp: Multipart) -> Result<Upload, String> {
    let mut up = Upload::default();
    while let Some(field) = mp.next_field().await.map_err(|e| e.body_text())? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            up.file = Some(field.bytes().await.map_err(|e| e.body_text())?.to_vec());
            continue;
        }
        let text = field.text().await.map_err(|e| e.body_text())?;
        let slot = match name.as_str() {
            "submission_id" => &mut up.submission_id,
            "student_pseudonym" => &mut up.student_pseudonym,
            "week_id" => &mut up.week_id,
            "format" => &mut up.format,
            other => return Err(format!("unexpected field {other}")),
        };
        *slot = Some(text.trim().to_string());
    }
    Ok(up)
}

async fn submit(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Response {
    let upload = match multipart {
        Ok(mp) => read_upload(mp).await,
        Err(e) => Err(e.body_text()),
    };
    let up = match upload {
        Ok(up) => up,
        Err(reason) => return bad_request(reason),
    };
    let missing = |f: &str| bad_request(format!("missing field {f}"));
    let Some(pseudonym) = up.student_pseudonym.filter(|s| !s.is_empty()) else {
        return missing("student_pseudonym");
    };
    let Some(week_id) = up.week_id.filter(|s| !s.is_empty()) else {
        return missing("week_id");
    };
    let Some(format) = up.format.filter(|s| !s.is_empty()) else {
        return missing("format");
    };
    let Some(payload) = up.file else {
        return missing("file");
    };
    let format: TranscriptFormat = match format.parse() {
        Ok(f) => f,
        Err(_) => return bad_request(format!("unknown format {format}; expected jsonl or text")),
    };
    let submission_id = up
        .submission_id
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| derive_submission_id(&pseudonym, &week_id, &payload));

    let pipeline = state.pipeline.clone();
    let ingested = tokio::task::spawn_blocking(move || {
        pipeline.ingest(&submission_id, &pseudonym, &week_id, format, &payload, now())
    })
    .await;
    let event = match ingested {
        Ok(Ok(event)) => event,
        Ok(Err(e)) => return pipeline_error(e),
        Err(e) => return pipeline_error(PipelineError::InvalidSubmission(e.to_string())),
    };
    match enqueue(&state.queue, event).await {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => pipeline_error(e),
    }
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default = "instructor")]
    role: Reader,
}

fn instructor() -> Reader {
    Reader::Instructor
}

async fn report(
    State(state): State<AppState>,
    UrlPath(key): UrlPath<String>,
    query: Result<Query<ReportQuery>, axum::extract::rejection::QueryRejection>,
) -> Response {
    let Ok(Query(q)) = query else {
        return bad_request("role must be student or instructor");
    };
    let pipeline = state.pipeline.clone();
    let found = tokio::task::spawn_blocking(move || pipeline.store().get(&key)).await;
    let not_found = || error_body(StatusCode::NOT_FOUND, json!({"error": "no such report"}));
    match found {
        Ok(Ok(Some((meta, bytes)))) => {
            if !matches!(meta.kind, ArtifactKind::Report | ArtifactKind::ClassReport) {
                return not_found();
            }
            if !meta.acl.allows(q.role) {
                return error_body(StatusCode::FORBIDDEN, json!({"error": "not visible to this role"}));
            }
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], bytes).into_response()
        }
        Ok(Ok(None)) => not_found(),
        Ok(Err(super::StoreError::InvalidKey(_))) => bad_request("key must be 64 lowercase hex digits"),
        Ok(Err(e)) => pipeline_error(e.into()),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": e.to_string()})),
    }
}

/// Contents of a `{submission_id}.meta` file in the watch folder.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DropMeta {
    student_pseudonym: String,
    week_id: String,
    #[serde(default = "text_format")]
    format: TranscriptFormat,
}

fn text_format() -> TranscriptFormat {
    TranscriptFormat::PlainTextExport
}

/// Submission ids with both halves of a pair present, in name order.
fn ready_pairs(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "meta") && path.with_extension("txt").is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn move_pair(dir: &Path, id: &str, to: &str) -> std::io::Result<()> {
    let dest = dir.join(to);
    std::fs::create_dir_all(&dest)?;
    for ext in ["meta", "txt"] {
        let name = format!("{id}.{ext}");
        std::fs::rename(dir.join(&name), dest.join(&name))?;
    }
    Ok(())
}

fn ingest_pair(pipeline: &Pipeline, dir: &Path, id: &str) -> Result<SubmissionEvent, String> {
    let meta_text =
        std::fs::read_to_string(dir.join(format!("{id}.meta"))).map_err(|e| e.to_string())?;
    let meta: DropMeta = toml::from_str(&meta_text).map_err(|e| e.to_string())?;
    let payload = std::fs::read(dir.join(format!("{id}.txt"))).map_err(|e| e.to_string())?;
    pipeline
        .ingest(id, &meta.student_pseudonym, &meta.week_id, meta.format, &payload, now())
        .map_err(|e| e.to_string())
}

async fn poll_watch_dir(
    dir: PathBuf,
    every: Duration,
    pipeline: Arc<Pipeline>,
    queue: mpsc::Sender<Job>,
    mut stopped: watch::Receiver<bool>,
) {
    let mut tick = tokio::time::interval(every);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = tick.tick() => {}
            _ = stopped.wait_for(|s| *s) => break,
        }
        let scan_dir = dir.clone();
        let ids = match tokio::task::spawn_blocking(move || ready_pairs(&scan_dir)).await {
            Ok(Ok(ids)) => ids,
            Ok(Err(e)) => {
                tracing::warn!(dir = %dir.display(), "cannot scan watch folder: {e}");
                continue;
            }
            Err(_) => continue,
        };
        for id in ids {
            let (p, d, i) = (pipeline.clone(), dir.clone(), id.clone());
            let ingested = tokio::task::spawn_blocking(move || ingest_pair(&p, &d, &i))
                .await
                .unwrap_or_else(|e| Err(e.to_string()));
            let dest = match ingested {
                Ok(event) => match enqueue(&queue, event).await {
                    Ok(outcome) => {
                        tracing::info!(submission = %id, report = %outcome.report_key, "watch folder submission processed");
                        "processed"
                    }
                    Err(e) => {
                        tracing::warn!(submission = %id, "watch folder submission failed: {e}");
                        "processed"
                    }
                },
                Err(reason) => {
                    tracing::warn!(submission = %id, "rejected watch folder pair: {reason}");
                    "rejected"
                }
            };
            if let Err(e) = move_pair(&dir, &id, dest) {
                tracing::warn!(submission = %id, "cannot move watch folder pair: {e}");
            }
        }
    }
}
