//! Long-running HTTP service: annotation API, ingest/extract, asynchronous
//! jobs and series downloads.
//!
//! Store writes go through one mutex per store, so each store has a single
//! writer. Long jobs run on the blocking pool, at most `service.workers`
//! at a time.

mod jobs;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use stance_core::annotation::{
    class_counts, kappa_variant, AnnotationLog, AnnotationRecord, KappaVariant, RawRating,
};
use stance_core::corpus::{ArticleStore, IngestFormat};
use stance_core::retry::Backoff;
use stance_core::similarity::{EmbedRequest, EmbedResponse, EmbeddingTransport, HttpEmbedding};
use stance_core::StanceLabel;
use tokio::sync::Semaphore;

pub use jobs::{Job, JobKind, JobStatus, JobTable};

use crate::config::secret;
use crate::error::{ErrorKind, PipelineError, Result};
use crate::ops::{self, Backend, ClassifyParams, EvalParams, ExtractedSentence, IngestParams, LabelSource, SimilarityParams, TrendParams, Workspace};

/// Error wrapper rendering `{code, message, details}` with a status code.
pub struct ApiError(pub PipelineError);

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Backend => StatusCode::BAD_GATEWAY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Shared embedding transport, so tests can inject a mock.
#[derive(Clone)]
pub struct SharedEmbedding(pub Arc<dyn EmbeddingTransport>);

impl EmbeddingTransport for SharedEmbedding {
    fn embed(&self, request: &EmbedRequest) -> std::result::Result<EmbedResponse, stance_core::classify::TransportError> {
        self.0.embed(request)
    }
}

pub struct AppState {
    pub ws: Workspace,
    store: Mutex<ArticleStore>,
    log: Mutex<AnnotationLog>,
    jobs: Arc<JobTable>,
    pool: Arc<Semaphore>,
    token: Option<String>,
    embedding: Option<(String, usize, SharedEmbedding)>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Opens every store. A corrupt store is an error: the service refuses
    /// to start rather than serve partial data.
    pub fn open(ws: Workspace) -> Result<Arc<Self>> {
        let store = ws.open_store()?;
        let log = ws.open_log()?;
        let jobs = JobTable::open(ws.layout.clone())?;
        let token = secret(ws.config.service.token_env.as_ref());
        let embedding = ws.config.embedding.as_ref().map(|c| {
            let t = HttpEmbedding::new(&c.url, secret(c.token_env.as_ref()), Duration::from_secs(c.timeout_secs));
            (c.provider.clone(), c.batch_limit, SharedEmbedding(Arc::new(t)))
        });
        Ok(Arc::new(AppState {
            pool: Arc::new(Semaphore::new(ws.config.service.workers)),
            ws,
            store: Mutex::new(store),
            log: Mutex::new(log),
            jobs,
            token,
            embedding,
        }))
    }

    /// Replaces the embedding transport (provider name, batch limit).
    pub fn with_embedding(self: Arc<Self>, provider: &str, batch_limit: usize, t: Arc<dyn EmbeddingTransport>) -> Arc<Self> {
        let mut state = Arc::try_unwrap(self).unwrap_or_else(|_| panic!("state already shared"));
        state.embedding = Some((provider.to_string(), batch_limit, SharedEmbedding(t)));
        Arc::new(state)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/ingest", post(ingest))
        .route("/extract", post(extract))
        .route("/annotation/next", get(next_task))
        .route("/annotation/submit", post(submit))
        .route("/annotation/progress", get(progress))
        .route("/agreement", get(agreement))
        .route("/jobs/{kind}", post(create_job))
        .route("/jobs/{kind}", get(get_job))
        .route("/series/{file}", get(series))
        .fallback(|| async { ApiError(PipelineError::not_found("no such endpoint")) })
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

async fn auth(State(state): State<Arc<AppState>>, headers: HeaderMap, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            let err = PipelineError::new(ErrorKind::Validation, "missing or wrong bearer token");
            return (StatusCode::UNAUTHORIZED, Json(err)).into_response();
        }
    }
    next.run(request).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(PipelineError::internal(format!("worker panicked: {e}"))))?
        .map_err(ApiError)
}

fn body<T: for<'de> Deserialize<'de>>(value: Value) -> ApiResult<T> {
    serde_json::from_value(value).map_err(|e| ApiError(PipelineError::validation(format!("request body: {e}"))))
}

fn manifest_reply(manifest: &crate::manifest::RunManifest, path: &std::path::Path) -> Json<Value> {
    Json(json!({ "summary": manifest.summary, "manifest": path }))
}

#[derive(Deserialize)]
struct IngestBody {
    publisher: String,
    format: IngestFormat,
    content: String,
    #[serde(default)]
    window: Option<(chrono::NaiveDate, chrono::NaiveDate)>,
}

async fn ingest(State(state): State<Arc<AppState>>, Json(raw): Json<Value>) -> ApiResult<Json<Value>> {
    let b: IngestBody = body(raw)?;
    let (m, path) = blocking(move || {
        let params = IngestParams {
            publisher: b.publisher,
            format: b.format,
            window: b.window,
        };
        let mut store = lock(&state.store);
        state.ws.record("ingest", serde_json::to_value(&params)?, || {
            ops::ingest(&state.ws, &mut store, b.content.as_bytes(), None, &params)
        })
    })
    .await?;
    Ok(manifest_reply(&m, &path))
}

async fn extract(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let (m, path) = blocking(move || {
        let store = lock(&state.store);
        state.ws.record("extract", json!({}), || ops::extract(&state.ws, &store))
    })
    .await?;
    Ok(manifest_reply(&m, &path))
}

// ------------------------------------------------------------ annotation

/// An annotator's tasks: own batches and overlap batches interleaved one
/// sentence at a time, each in batch order.
fn task_order(plan: &ops::SamplePlan, annotator: &str) -> Vec<(String, String, bool)> {
    let lists: Vec<_> = plan
        .batches
        .iter()
        .filter(|b| b.annotators.iter().any(|a| a == annotator))
        .collect();
    let (overlap, own): (Vec<_>, Vec<_>) = lists.into_iter().partition(|b| b.overlap);
    let flat = |bs: Vec<&stance_core::annotation::AnnotationBatch>| -> Vec<(String, String, bool)> {
        bs.into_iter()
            .flat_map(|b| b.sentence_ids.iter().map(move |s| (s.clone(), b.id.clone(), b.overlap)))
            .collect()
    };
    let (own, overlap) = (flat(own), flat(overlap));
    let mut out = Vec::with_capacity(own.len() + overlap.len());
    let (mut i, mut j) = (own.into_iter(), overlap.into_iter());
    loop {
        match (i.next(), j.next()) {
            (None, None) => break,
            (a, b) => out.extend(a.into_iter().chain(b)),
        }
    }
    out
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

fn sentences_by_id(ws: &Workspace) -> Result<HashMap<String, ExtractedSentence>> {
    Ok(ops::read_sentences(ws)?.into_iter().map(|s| (s.id.clone(), s)).collect())
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> ApiResult<Response> {
    let annotator = q
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| PipelineError::validation("query parameter `annotator` is required"))?;
    blocking(move || {
        let plan = ops::read_plan(&state.ws)?;
        let tasks = task_order(&plan, &annotator);
        if tasks.is_empty() {
            return Err(PipelineError::not_found(format!("annotator {annotator:?} has no assignments")));
        }
        let log = lock(&state.log);
        let pending = tasks
            .iter()
            .enumerate()
            .find(|(_, (sid, _, _))| log.live(sid, &annotator).is_none());
        let done = tasks.iter().filter(|(sid, _, _)| log.live(sid, &annotator).is_some()).count();
        drop(log);
        let Some((pos, (sid, batch, overlap))) = pending else {
            return Ok(StatusCode::NO_CONTENT.into_response());
        };
        let sentences = sentences_by_id(&state.ws)?;
        let s = sentences
            .get(sid)
            .ok_or_else(|| PipelineError::internal(format!("assigned sentence {sid} missing from extract")))?;
        Ok(Json(json!({
            "sentence_id": s.id,
            "text": s.text,
            "publisher": s.publisher,
            "date": s.date,
            "batch_id": batch,
            "overlap": overlap,
            "position": pos + 1,
            "total": tasks.len(),
            "done": done,
            "guideline_version": state.ws.config.guideline_version,
        }))
        .into_response())
    })
    .await
}

#[derive(Deserialize)]
struct SubmitBody {
    sentence_id: String,
    annotator_id: String,
    rating: Value,
}

fn parse_rating(v: &Value) -> Result<RawRating> {
    let parsed = match v {
        Value::Number(n) => n.as_i64().and_then(RawRating::from_number),
        Value::String(s) => s.parse().ok(),
        _ => None,
    };
    parsed.ok_or_else(|| {
        PipelineError::validation("rating must be 1-5 or \"ambiguous\"")
            .with_details(json!({ "field": "rating", "value": v }))
    })
}

async fn submit(State(state): State<Arc<AppState>>, Json(raw): Json<Value>) -> ApiResult<(StatusCode, Json<Value>)> {
    let b: SubmitBody = body(raw)?;
    let raw_rating = parse_rating(&b.rating)?;
    if b.annotator_id.trim().is_empty() {
        return Err(PipelineError::validation("annotator_id is empty").into());
    }
    blocking(move || {
        if !sentences_by_id(&state.ws)?.contains_key(&b.sentence_id) {
            return Err(PipelineError::not_found(format!("unknown sentence {:?}", b.sentence_id)));
        }
        let record = AnnotationRecord::new(
            b.sentence_id,
            b.annotator_id,
            raw_rating,
            chrono::Utc::now().to_rfc3339(),
            state.ws.config.guideline_version.clone(),
        );
        // Returns only after the record is synced to disk.
        lock(&state.log).submit(record.clone()).map_err(|e| PipelineError::internal(e.to_string()))?;
        Ok((StatusCode::CREATED, Json(serde_json::to_value(&record)?)))
    })
    .await
}

async fn progress(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let plan = ops::read_plan(&state.ws).ok();
        let log = lock(&state.log);
        let mut annotators: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        if let Some(plan) = &plan {
            for b in &plan.batches {
                for a in &b.annotators {
                    let e = annotators.entry(a.clone()).or_default();
                    e.0 += b.sentence_ids.len();
                    e.1 += b.sentence_ids.iter().filter(|s| log.live(s, a).is_some()).count();
                }
            }
        }
        let counts = class_counts(log.live_records());
        Ok(Json(json!({
            "annotators": annotators
                .into_iter()
                .map(|(a, (assigned, done))| json!({ "annotator": a, "assigned": assigned, "done": done }))
                .collect::<Vec<_>>(),
            "live_records": log.live_count(),
            "submissions": log.all_entries().len(),
            "class_counts": StanceLabel::ALL
                .iter()
                .zip(counts)
                .map(|(l, n)| (l.as_str().to_string(), json!(n)))
                .collect::<serde_json::Map<_, _>>(),
        })))
    })
    .await
}

#[derive(Deserialize)]
struct AgreementQuery {
    a: Option<String>,
    b: Option<String>,
}

async fn agreement(State(state): State<Arc<AppState>>, Query(q): Query<AgreementQuery>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let log = lock(&state.log);
        let pairs: Vec<(String, String)> = match (q.a, q.b) {
            (Some(a), Some(b)) => vec![(a, b)],
            (None, None) => {
                let mut names: Vec<String> = log.live_records().map(|r| r.annotator_id.clone()).collect();
                names.sort();
                names.dedup();
                let mut out = Vec::new();
                for (i, a) in names.iter().enumerate() {
                    for b in &names[i + 1..] {
                        out.push((a.clone(), b.clone()));
                    }
                }
                out
            }
            _ => return Err(PipelineError::validation("give both `a` and `b`, or neither")),
        };
        let mut rows = Vec::new();
        for (a, b) in pairs {
            let overlap = log.overlap_pairs(&a, &b);
            if overlap.is_empty() {
                continue;
            }
            let variants: serde_json::Map<String, Value> = KappaVariant::ALL
                .iter()
                .map(|v| {
                    let cell = match kappa_variant(&overlap, *v) {
                        Ok((kappa, n)) => json!({ "kappa": kappa, "n": n }),
                        Err(e) => json!({ "kappa": null, "n": 0, "error": e.to_string() }),
                    };
                    (v.as_str().to_string(), cell)
                })
                .collect();
            rows.push(json!({ "a": a, "b": b, "overlap": overlap.len(), "variants": variants }));
        }
        Ok(Json(json!({ "pairs": rows })))
    })
    .await
}

// ------------------------------------------------------------------ jobs

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyJob {
    backend: Backend,
    #[serde(flatten)]
    params: ClassifyParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateJob {
    backend: Backend,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    labels: Option<LabelSource>,
}

fn default_k() -> usize {
    5
}

fn run_job(state: &AppState, kind: JobKind, params: Value) -> Result<(crate::manifest::RunManifest, std::path::PathBuf)> {
    let ws = &state.ws;
    match kind {
        JobKind::Classify => {
            let job: ClassifyJob = serde_json::from_value(params.clone())?;
            let classifier = ops::build_classifier(ws, job.backend)?;
            ws.record("classify", params, || ops::classify(ws, job.backend, classifier.as_ref(), &job.params))
        }
        JobKind::Evaluate => {
            let job: EvaluateJob = serde_json::from_value(params.clone())?;
            let external = match job.backend {
                Backend::Nb => None,
                other => Some(ops::build_classifier(ws, other)?),
            };
            let p = EvalParams {
                k: job.k,
                labels: job.labels.unwrap_or(LabelSource::Annotations),
            };
            ws.record("eval", params, || ops::evaluate(ws, job.backend, external.as_deref().map(|c| c as _), &p))
        }
        JobKind::Trends => {
            let p: TrendParams = serde_json::from_value(params.clone())?;
            let store = lock(&state.store);
            ws.record("trends", params, || ops::trends(ws, &store, &p))
        }
        JobKind::Similarity => {
            let p: SimilarityParams = serde_json::from_value(params.clone())?;
            let (provider, limit, transport) = state
                .embedding
                .clone()
                .ok_or_else(|| PipelineError::validation("config has no [embedding] section"))?;
            ws.record("similarity", params, || {
                ops::similarity(ws, &transport, &provider, limit, &Backoff::default(), &p)
            })
        }
    }
}

async fn create_job(
    State(state): State<Arc<AppState>>,
    UrlPath(kind): UrlPath<String>,
    raw: Option<Json<Value>>,
) -> ApiResult<(StatusCode, Json<Job>)> {
    let kind = JobKind::parse(&kind)
        .ok_or_else(|| PipelineError::not_found(format!("unknown job kind {kind:?}")))?;
    let params = raw.map(|Json(v)| v).unwrap_or_else(|| json!({}));
    // Reject malformed parameters before queueing.
    let check = match kind {
        JobKind::Classify => serde_json::from_value::<ClassifyJob>(params.clone()).map(|_| ()),
        JobKind::Evaluate => serde_json::from_value::<EvaluateJob>(params.clone()).map(|_| ()),
        JobKind::Trends => serde_json::from_value::<TrendParams>(params.clone()).map(|_| ()),
        JobKind::Similarity => serde_json::from_value::<SimilarityParams>(params.clone()).map(|_| ()),
    };
    check.map_err(|e| PipelineError::validation(format!("job parameters: {e}")))?;
    let job = blocking({
        let state = state.clone();
        let params = params.clone();
        move || state.jobs.create(kind, params)
    })
    .await?;
    let id = job.id.clone();
    let runner = state.clone();
    tokio::spawn(async move {
        let Ok(_permit) = runner.pool.clone().acquire_owned().await else { return };
        runner.jobs.transition(&id, JobStatus::Running, |_| {});
        let st = runner.clone();
        let outcome = tokio::task::spawn_blocking(move || run_job(&st, kind, params)).await;
        let outcome = outcome.unwrap_or_else(|e| Err(PipelineError::internal(format!("job panicked: {e}"))));
        match outcome {
            Ok((manifest, path)) => runner.jobs.transition(&id, JobStatus::Done, |j| {
                j.steps_done = j.steps_total;
                j.result = Some(manifest.summary);
                j.manifest = Some(path.to_string_lossy().into_owned());
            }),
            Err(e) => runner.jobs.transition(&id, JobStatus::Failed, |j| j.error = Some(e)),
        };
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError(PipelineError::not_found(format!("no job {id:?}"))))
}

// ---------------------------------------------------------------- series

const SERIES: [&str; 5] = ["fig1", "fig3", "stance", "groups", "similarity"];

async fn series(State(state): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    let name = file
        .strip_suffix(".csv")
        .filter(|n| SERIES.contains(n))
        .ok_or_else(|| PipelineError::not_found(format!("unknown series {file:?}")))?
        .to_string();
    let path = state.ws.layout.series(&name);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| PipelineError::not_found(format!("series {name} has not been generated; run a trends job")))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

/// Binds and serves until Ctrl-C.
pub async fn serve(ws: Workspace) -> Result<()> {
    let bind = ws.config.service.bind.clone();
    let state = AppState::open(ws)?;
    let listener = tokio::net::TcpListener::bind(&bind)
        .await
        .map_err(|e| PipelineError::internal(format!("cannot bind {bind}: {e}")))?;
    tracing::info!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or(bind));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| PipelineError::internal(e.to_string()))
}
