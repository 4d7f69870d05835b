use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use elicit_core::corpus::{parse_corpus, split, to_csv_string, to_jsonl_string, Format, SplitOptions};
use elicit_core::{Corpus, Label, Prediction, RecordId};
use elicit_train::{evaluate_checkpoint, train_corpus, Checkpoint, TrainError, TrainRequest};
use serde::Serialize;

use crate::api::*;
use crate::config::ServeConfig;
use crate::store::{AnnotationStore, QueueFilter, StoreError};

pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(Envelope::new(ErrorBody { error: self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::UnknownRecord(_) => StatusCode::NOT_FOUND,
            StoreError::NoLabels => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn ok<T: Serialize>(body: T) -> Json<Envelope<T>> {
    Json(Envelope::new(body))
}

/// Shared service state. The loaded checkpoint sits behind an `Arc` so a
/// swap never disturbs requests already holding the old one.
pub struct AppState {
    pub store: AnnotationStore,
    config: ServeConfig,
    model: RwLock<Option<Arc<Checkpoint>>>,
    jobs: Mutex<BTreeMap<u64, JobStatus>>,
    next_job: AtomicU64,
    training: Mutex<()>,
}

impl AppState {
    pub fn new(store: AnnotationStore, config: ServeConfig) -> Arc<Self> {
        Arc::new(AppState {
            store,
            config,
            model: RwLock::new(None),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            training: Mutex::new(()),
        })
    }

    /// Opens the store and, when configured, the checkpoint.
    pub fn from_config(config: ServeConfig) -> Result<Arc<Self>, String> {
        let store = AnnotationStore::open(&config.store).map_err(|e| format!("{}: {e}", config.store.display()))?;
        let checkpoint = config.checkpoint.clone();
        let state = AppState::new(store, config);
        if let Some(dir) = checkpoint {
            let ckpt = Checkpoint::load(&dir).map_err(|e| e.to_string())?;
            state.install(ckpt);
        }
        Ok(state)
    }

    pub fn current(&self) -> Option<Arc<Checkpoint>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces the live checkpoint.
    pub fn install(&self, ckpt: Checkpoint) {
        log::info!("serving {} from {}", ckpt.manifest().model_name, ckpt.dir().display());
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(ckpt));
    }

    pub fn config(&self) -> &ServeConfig {
        &self.config
    }

    fn job(&self, id: u64) -> Option<JobStatus> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut JobStatus)) {
        if let Some(j) = self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get_mut(&id) {
            f(j);
        }
    }

    /// Scores unlabeled records the live checkpoint has not seen yet.
    fn score_unlabeled(&self, ckpt: &Checkpoint) -> ApiResult<()> {
        let sha = ckpt.manifest_sha256();
        let pending = self.store.unscored(sha)?;
        if pending.is_empty() {
            return Ok(());
        }
        let corpus = Corpus::new("queue", "annotation store", pending).map_err(ApiError::internal)?;
        let dataset = ckpt.encode_corpus(&corpus).map_err(ApiError::internal)?;
        let predictions = ckpt.predict(&dataset, self.config.threshold).map_err(ApiError::internal)?;
        let scores: Vec<(RecordId, f64)> = predictions.into_iter().map(|p| (p.record_id, p.score)).collect();
        self.store.set_scores(sha, &scores)?;
        Ok(())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn model_info(ckpt: &Checkpoint) -> ModelInfo {
    let m = ckpt.manifest();
    ModelInfo {
        model_name: m.model_name.clone(),
        model_kind: m.model_kind,
        checkpoint_sha256: ckpt.manifest_sha256().to_string(),
        dir: ckpt.dir().to_path_buf(),
        metric_snapshot: m.metric_snapshot.clone(),
    }
}

/// Same computation as the command-line classifier.
pub fn classify(ckpt: &Checkpoint, text: &str, threshold: f64) -> Result<ClassifyResponse, TrainError> {
    let c = ckpt.classify_text(text, threshold)?;
    Ok(ClassifyResponse {
        label: c.label,
        score: c.score,
        confidence: c.confidence,
        empty_after_prep: c.empty_after_prep,
        model_name: ckpt.manifest().model_name.clone(),
        checkpoint_sha256: ckpt.manifest_sha256().to_string(),
    })
}

async fn status(State(state): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let counts = state.store.counts()?;
    Ok(ok(StatusResponse { model: state.current().as_deref().map(model_info), counts }))
}

async fn classify_handler(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let ckpt = state.current().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no checkpoint loaded"))?;
    if req.text.trim().is_empty() {
        return Err(ApiError::unprocessable("text is empty"));
    }
    if let Some(name) = &req.model {
        if *name != ckpt.manifest().model_name {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("model `{name}` is not loaded")));
        }
    }
    let threshold = state.config.threshold;
    let response = blocking(move || classify(&ckpt, &req.text, threshold).map_err(ApiError::internal)).await?;
    Ok(ok(response))
}

async fn unlabeled(
    State(state): State<Arc<AppState>>,
    query: Result<Query<QueueQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = query.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let ckpt = state.current();
    let st = state.clone();
    let page = blocking(move || {
        if let Some(c) = &ckpt {
            st.score_unlabeled(c)?;
        }
        let policy = q.policy.unwrap_or(st.config.queue_policy);
        let filter = QueueFilter { app: q.app, min_rating: q.min_rating, max_rating: q.max_rating };
        let rows = st.store.unlabeled(q.limit.unwrap_or(st.config.default_limit), policy, &filter)?;
        let live = ckpt.as_ref().map(|c| c.manifest_sha256().to_string());
        let threshold = st.config.threshold;
        let mut items = Vec::with_capacity(rows.len());
        for row in rows {
            let suggestion = match (&live, row.score, &row.scored_by) {
                (Some(sha), Some(score), Some(by)) if sha == by => {
                    let p = Prediction::from_score(row.record.record_id.clone(), score, threshold);
                    Some(Suggestion { label: p.predicted_label, score: p.score, confidence: p.confidence() })
                }
                _ => None,
            };
            let r = row.record;
            items.push(QueueItem {
                history: st.store.history(&r.record_id)?,
                record_id: r.record_id,
                app_name: r.app_name,
                username: r.username,
                rating: r.app_rating_given,
                text: r.review_description,
                suggestion,
            });
        }
        Ok(QueuePage { policy, model_name: ckpt.map(|c| c.manifest().model_name.clone()), items })
    })
    .await?;
    Ok(ok(page))
}

async fn record(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let id = RecordId::new(id);
    let stored = state.store.get(&id)?;
    let r = stored.record;
    Ok(ok(RecordView {
        history: state.store.history(&id)?,
        record_id: r.record_id,
        app_name: r.app_name,
        username: r.username,
        rating: r.app_rating_given,
        text: r.review_description,
        label: r.target_variable,
    }))
}

async fn history(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let id = RecordId::new(id);
    Ok(ok(HistoryResponse { history: state.store.history(&id)?, record_id: id }))
}

async fn label(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let Json(req) = body?;
    let label: Label = req.label.parse().map_err(ApiError::unprocessable)?;
    if req.annotator.trim().is_empty() {
        return Err(ApiError::unprocessable("annotator is empty"));
    }
    state.store.label(&RecordId::new(id), label, req.annotator.trim(), Utc::now())?;
    Ok(StatusCode::NO_CONTENT)
}

async fn counts(State(state): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    Ok(ok(CountsResponse { counts: state.store.counts()?, history_entries: state.store.history_len()? }))
}

async fn export(State(state): State<Arc<AppState>>, body: Result<Json<ExportRequest>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let format: Format = req
        .format
        .parse()
        .map_err(|_| ApiError::unprocessable(format!("unsupported export format `{}` (jsonl, csv)", req.format)))?;
    let corpus = state.store.export_corpus("annotated")?;
    let (text, mime) = match format {
        Format::Jsonl => (to_jsonl_string(&corpus), "application/x-ndjson"),
        Format::Csv => (to_csv_string(&corpus), "text/csv; charset=utf-8"),
    };
    let disposition = format!("attachment; filename=\"annotated.{}\"", format.extension());
    Ok(([(header::CONTENT_TYPE, mime.to_string()), (header::CONTENT_DISPOSITION, disposition)], text).into_response())
}

/// Body is a corpus file, JSONL unless `?format=csv`.
async fn import(
    State(state): State<Arc<AppState>>,
    Query(params): Query<BTreeMap<String, String>>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let format: Format = params
        .get("format")
        .map(|f| f.parse())
        .transpose()
        .map_err(|_| ApiError::unprocessable("unsupported import format (jsonl, csv)"))?
        .unwrap_or(Format::Jsonl);
    let corpus =
        parse_corpus(&body, format, "upload", "POST /reviews/import").map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let stats = state.store.import(&corpus, "import")?;
    Ok(ok(stats))
}

async fn swap_checkpoint(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CheckpointRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let path = req.path;
    let ckpt = blocking(move || {
        Checkpoint::load(&path).map_err(|e| match e {
            TrainError::CheckpointNotFound(_) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
            other => ApiError::unprocessable(other.to_string()),
        })
    })
    .await?;
    let info = model_info(&ckpt);
    state.install(ckpt);
    Ok(ok(info))
}

fn train_request(req: &TrainJobRequest) -> ApiResult<TrainRequest> {
    let mut t = TrainRequest::new(req.model);
    if let Some(name) = &req.model_name {
        t.model_name = name.clone();
    }
    t.pretrained = req.pretrained.clone();
    let c = &mut t.config;
    c.epochs = req.epochs.unwrap_or(c.epochs);
    c.batch_size = req.batch_size.unwrap_or(c.batch_size);
    c.learning_rate = req.learning_rate.unwrap_or(c.learning_rate);
    c.max_len = req.max_len.unwrap_or(c.max_len);
    c.seed = req.seed.unwrap_or(c.seed);
    c.validate(req.model).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    if !(req.train_fraction > 0.0 && req.train_fraction <= 1.0) {
        return Err(ApiError::unprocessable("train_fraction must be in (0, 1]"));
    }
    Ok(t)
}

fn run_job(state: Arc<AppState>, id: u64, req: TrainJobRequest, treq: TrainRequest, corpus: Corpus) {
    let _one_at_a_time = state.training.lock().unwrap_or_else(|e| e.into_inner());
    state.update_job(id, |j| j.state = JobState::Running);
    let out_dir = state.config.checkpoints_dir.join(format!("job-{id:04}"));
    let result = (|| -> Result<(PathBuf, Option<elicit_core::metrics::EvalReport>, Checkpoint), String> {
        let parts = split(&corpus, SplitOptions { train_fraction: req.train_fraction, seed: treq.config.seed, stratify: true })
            .map_err(|e| e.to_string())?;
        state.update_job(id, |j| {
            j.train_size = parts.train.len();
            j.test_size = parts.test.len();
        });
        let st = state.clone();
        let outcome = train_corpus(&parts.train, &treq, &out_dir, &mut |e| {
            st.update_job(id, |j| {
                j.epochs_done = e.epoch;
                j.per_epoch_train_loss.push(e.train_loss);
            })
        })
        .map_err(|e| e.to_string())?;
        let mut ckpt = outcome.checkpoint;
        let report = if parts.test.is_empty() {
            None
        } else {
            let (_, report) = evaluate_checkpoint(&ckpt, &parts.test, state.config.threshold).map_err(|e| e.to_string())?;
            ckpt.set_metric_snapshot(report.clone()).map_err(|e| e.to_string())?;
            Some(report)
        };
        Ok((out_dir.clone(), report, ckpt))
    })();
    match result {
        Ok((dir, report, ckpt)) => {
            state.install(ckpt);
            state.update_job(id, |j| {
                j.state = JobState::Succeeded;
                j.checkpoint = Some(dir);
                j.report = report;
            });
        }
        Err(e) => {
            log::warn!("training job {id} failed: {e}");
            state.update_job(id, |j| {
                j.state = JobState::Failed;
                j.error = Some(e);
            });
        }
    }
}

async fn start_training(
    State(state): State<Arc<AppState>>,
    body: Option<Json<TrainJobRequest>>,
) -> ApiResult<(StatusCode, Json<Envelope<JobStatus>>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let treq = train_request(&req)?;
    let corpus = state.store.export_corpus("annotated")?;
    let id = state.next_job.fetch_add(1, Ordering::Relaxed);
    let job = JobStatus {
        job_id: id,
        state: JobState::Queued,
        model: req.model,
        epochs_total: treq.config.epochs,
        epochs_done: 0,
        per_epoch_train_loss: Vec::new(),
        train_size: 0,
        test_size: 0,
        checkpoint: None,
        report: None,
        error: None,
    };
    state.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id, job.clone());
    let st = state.clone();
    std::thread::spawn(move || run_job(st, id, req, treq, corpus));
    Ok((StatusCode::ACCEPTED, ok(job)))
}

async fn job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<impl IntoResponse> {
    state.job(id).map(ok).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

async fn jobs(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let all: Vec<JobStatus> = state.jobs.lock().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
    ok(serde_json::json!({ "jobs": all }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

async fn stamp(mut res: Response) -> Response {
    res.headers_mut().insert(SCHEMA_HEADER, HeaderValue::from_str(&API_SCHEMA_VERSION.to_string()).expect("digits"));
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/classify", post(classify_handler))
        .route("/reviews/unlabeled", get(unlabeled))
        .route("/reviews/import", post(import))
        .route("/reviews/{id}", get(record))
        .route("/reviews/{id}/history", get(history))
        .route("/reviews/{id}/label", post(label))
        .route("/labels/counts", get(counts))
        .route("/corpus/export", post(export))
        .route("/checkpoint", post(swap_checkpoint))
        .route("/train", post(start_training))
        .route("/jobs", get(jobs))
        .route("/jobs/{id}", get(job))
        .fallback(not_found)
        .layer(axum::middleware::map_response(stamp))
        .with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn run(config: ServeConfig) -> Result<(), String> {
    let addr = config.addr()?;
    let state = AppState::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("bind {addr}: {e}"))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
