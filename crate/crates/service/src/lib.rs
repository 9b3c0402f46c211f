//! HTTP triage queue over a ranked pool.
//!
//! A reviewer pages through the ranking, inspects each sentence with its
//! pre-adjudicated labels and the evidence that put it there, and submits
//! corrected labels or skips it. Every decision goes to an append-only log.
//! Retraining runs in the background on the corpus with the submitted labels
//! in place of the pre-adjudicated ones.

mod log;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use recheck_core::corpus::{BioTag, CorpusError, ParallelCorpus};
use recheck_core::evaluation::NerScore;
use recheck_core::experiment::retrain_and_evaluate;
use recheck_core::ranking::{Explanation, RankedEntry, Ranking};
use recheck_core::tagger::{SentencePrediction, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub use log::{effective_annotations, Action, AdjudicationLog, Applied, LogEntry, Rejection, Status, LOG_SCHEMA};

pub const API_SCHEMA: &str = "recheck/triage/v1";
pub const MAX_PAGE: usize = 1000;
pub const DEFAULT_PAGE: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("adjudication log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("ranking does not match the corpus: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Retrains on an effective corpus and returns its held-out score.
pub type Retrainer = Arc<dyn Fn(&ParallelCorpus) -> Result<NerScore, String> + Send + Sync>;

/// Retrains the tagger on the train split and scores adjudicated test2.
pub fn default_retrainer(config: TrainConfig, entity_filter: Option<String>) -> Retrainer {
    Arc::new(move |corpus| {
        retrain_and_evaluate(corpus, &config, entity_filter.as_deref()).map_err(|e| e.to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
struct Job {
    status: JobStatus,
    adjudications: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<NerScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Default)]
struct Jobs {
    next: u64,
    by_id: HashMap<u64, Job>,
}

/// Everything the handlers share.
pub struct Triage {
    corpus: ParallelCorpus,
    ranking: Ranking,
    predictions: BTreeMap<String, SentencePrediction>,
    log: RwLock<AdjudicationLog>,
    jobs: Mutex<Jobs>,
    retrainer: Retrainer,
}

impl Triage {
    /// Every ranked id must be a corpus sentence.
    pub fn new(corpus: ParallelCorpus, ranking: Ranking) -> Result<Self, ServiceError> {
        if let Some(e) = ranking.entries.iter().find(|e| !corpus.contains(&e.id)) {
            return Err(ServiceError::Mismatch(format!("unknown sentence {}", e.id)));
        }
        Ok(Self {
            corpus,
            ranking,
            predictions: BTreeMap::new(),
            log: RwLock::new(AdjudicationLog::new()),
            jobs: Mutex::new(Jobs::default()),
            retrainer: default_retrainer(TrainConfig::default(), None),
        })
    }

    /// Tagger output shown next to the pre-adjudicated labels.
    pub fn with_predictions(mut self, predictions: impl IntoIterator<Item = SentencePrediction>) -> Self {
        self.predictions = predictions.into_iter().map(|p| (p.id.clone(), p)).collect();
        self
    }

    /// Replays and then appends to the log at `path`.
    pub fn with_log_file(mut self, path: &Path) -> Result<Self, ServiceError> {
        self.log = RwLock::new(AdjudicationLog::open(path, &self.corpus)?);
        Ok(self)
    }

    pub fn with_retrainer(mut self, retrainer: Retrainer) -> Self {
        self.retrainer = retrainer;
        self
    }

    pub fn corpus(&self) -> &ParallelCorpus {
        &self.corpus
    }

    /// The corpus with every adjudication applied.
    pub fn effective_corpus(&self) -> Result<ParallelCorpus, CorpusError> {
        self.log.read().expect("log lock").effective_corpus(&self.corpus)
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.log.read().expect("log lock").entries().to_vec()
    }
}

pub fn router(triage: Triage) -> Router {
    router_shared(Arc::new(triage))
}

pub fn router_shared(triage: Arc<Triage>) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/sentence/{id}", get(sentence))
        .route("/sentence/{id}/adjudicate", post(adjudicate))
        .route("/sentence/{id}/skip", post(skip))
        .route("/retrain", post(retrain))
        .route("/job/{id}", get(job))
        .layer(CorsLayer::permissive())
        .with_state(triage)
}

pub async fn serve(addr: SocketAddr, triage: Triage) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(triage)).await
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown sentence {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema": API_SCHEMA,
            "error": { "status": self.status.as_u16(), "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<Rejection> for ApiError {
    fn from(r: Rejection) -> Self {
        match r {
            Rejection::UnknownId => ApiError::new(StatusCode::NOT_FOUND, "unknown sentence"),
            Rejection::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            Rejection::Conflict(m) => ApiError::new(StatusCode::CONFLICT, m),
        }
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

#[derive(Deserialize)]
struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn queue(State(t): State<Arc<Triage>>, page: Result<Query<Page>, QueryRejection>) -> ApiResult {
    let Query(page) = page.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let offset = page.offset.unwrap_or(0);
    let limit = page.limit.unwrap_or(DEFAULT_PAGE);
    if !(1..=MAX_PAGE).contains(&limit) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("limit must be between 1 and {MAX_PAGE}"),
        ));
    }
    let log = t.log.read().expect("log lock");
    let items: Vec<Value> = t
        .ranking
        .entries
        .iter()
        .enumerate()
        .skip(offset)
        .take(limit)
        .map(|(i, e)| item(&t, &log, i + 1, e))
        .collect();
    let adjudicated = t.ranking.entries.iter().filter(|e| log.status(&e.id) == Status::Adjudicated).count();
    let skipped = t.ranking.entries.iter().filter(|e| log.status(&e.id) == Status::Skipped).count();
    Ok(Json(json!({
        "schema": API_SCHEMA,
        "method": t.ranking.method.name(),
        "offset": offset,
        "limit": limit,
        "total": t.ranking.len(),
        "counts": {
            "pending": t.ranking.len() - adjudicated - skipped,
            "adjudicated": adjudicated,
            "skipped": skipped,
        },
        "items": items,
    })))
}

fn ranked<'a>(t: &'a Triage, id: &str) -> Result<(usize, &'a RankedEntry), ApiError> {
    t.ranking
        .rank_of(id)
        .map(|r| (r, &t.ranking.entries[r - 1]))
        .ok_or_else(|| ApiError::not_found(id))
}

/// One queue entry with its current labels, prediction, evidence and status.
fn item(t: &Triage, log: &AdjudicationLog, rank: usize, entry: &RankedEntry) -> Value {
    let id = entry.id.as_str();
    let mut explanation = serde_json::to_value(&entry.explanation).expect("explanation serializes");
    if let Some(Explanation::Similarity { error_id, .. }) = &entry.explanation {
        if let (Some(obj), Some(err)) = (explanation.as_object_mut(), t.corpus.sentence(error_id)) {
            obj.insert("error_tokens".into(), json!(err.words()));
        }
    }
    let prediction = t
        .predictions
        .get(id)
        .map(|p| json!({ "tags": p.tags, "confidence": p.confidence }));
    json!({
        "id": id,
        "rank": rank,
        "score": entry.score,
        "split": t.corpus.split(id),
        "tokens": t.corpus.sentence(id).map(|s| s.words()),
        "pre_adjudicated": t.corpus.pre_adjudicated(id),
        "prediction": prediction,
        "explanation": explanation,
        "status": log.status(id),
        "adjudicated": log.adjudicated_tags(id),
    })
}

fn detail(t: &Triage, log: &AdjudicationLog, id: &str) -> ApiResult {
    let (rank, entry) = ranked(t, id)?;
    let mut body = item(t, log, rank, entry);
    body.as_object_mut()
        .expect("item is an object")
        .insert("schema".into(), API_SCHEMA.into());
    Ok(Json(body))
}

async fn sentence(State(t): State<Arc<Triage>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let log = t.log.read().expect("log lock");
    detail(&t, &log, &id)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdjudicateRequest {
    tags: Vec<String>,
    #[serde(default)]
    annotator: Option<String>,
}

async fn adjudicate(
    State(t): State<Arc<Triage>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AdjudicateRequest>, JsonRejection>,
) -> ApiResult {
    ranked(&t, &id)?;
    let Json(req) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let tags: Vec<BioTag> = req
        .tags
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, CorpusError>>()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut log = t.log.write().expect("log lock");
    log.submit(Action::Adjudicate, &id, tags, req.annotator, &t.corpus)?;
    detail(&t, &log, &id)
}

async fn skip(State(t): State<Arc<Triage>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ranked(&t, &id)?;
    let mut log = t.log.write().expect("log lock");
    log.submit(Action::Skip, &id, Vec::new(), None, &t.corpus)?;
    detail(&t, &log, &id)
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrainRequest {
    #[serde(default)]
    force: bool,
}

async fn retrain(State(t): State<Arc<Triage>>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: RetrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RetrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let (corpus, adjudications) = {
        let log = t.log.read().expect("log lock");
        let n = log.adjudicated().len();
        if n == 0 && !req.force {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "nothing has been adjudicated; pass {\"force\": true} to retrain anyway",
            ));
        }
        let corpus = log
            .effective_corpus(&t.corpus)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        (corpus, n)
    };
    let job_id = {
        let mut jobs = t.jobs.lock().expect("jobs lock");
        if jobs.by_id.values().any(|j| j.status == JobStatus::Running) {
            return Err(ApiError::new(StatusCode::CONFLICT, "a retraining job is already running"));
        }
        jobs.next += 1;
        let id = jobs.next;
        jobs.by_id.insert(
            id,
            Job {
                status: JobStatus::Running,
                adjudications,
                score: None,
                error: None,
            },
        );
        id
    };
    let worker = Arc::clone(&t);
    tokio::task::spawn_blocking(move || {
        let result = (worker.retrainer)(&corpus);
        let mut jobs = worker.jobs.lock().expect("jobs lock");
        let job = jobs.by_id.get_mut(&job_id).expect("job registered before spawn");
        match result {
            Ok(score) => {
                job.status = JobStatus::Done;
                job.score = Some(score);
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e);
            }
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "schema": API_SCHEMA, "job": job_id, "status": JobStatus::Running })),
    ))
}

async fn job(State(t): State<Arc<Triage>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id}"));
    let n: u64 = id.parse().map_err(|_| unknown())?;
    let jobs = t.jobs.lock().expect("jobs lock");
    let job = jobs.by_id.get(&n).ok_or_else(unknown)?;
    let mut body = serde_json::to_value(job).expect("job serializes");
    let obj = body.as_object_mut().expect("job is an object");
    obj.insert("schema".into(), API_SCHEMA.into());
    obj.insert("job".into(), n.into());
    Ok(Json(body))
}
