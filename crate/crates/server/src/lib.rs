//! JSON-over-HTTP front end for [`multiverse::study::Study`].
//!
//! Routes, all under `/study/{id}`:
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | GET | `/next-task` | `?annotator=<id>` | [`NextTask`] |
//! | POST | `/labels` | [`LabelSubmission`] | `SubmitOutcome<AnnotationRecord>` |
//! | POST | `/verdicts` | [`VerdictSubmission`] | `SubmitOutcome<VerdictRecord>` |
//! | GET | `/stats` | | [`multiverse::study::StudyStats`] |
//! | GET | `/progress` | | [`multiverse::study::Progress`] |
//!
//! Errors come back as `{"error": <code>, "message": <text>}` with a
//! matching status.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use multiverse::study::{LabelSubmission, NextTask, Study, StudyError, VerdictSubmission};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

/// Studies served by one process, keyed by id.
#[derive(Clone, Default)]
pub struct Registry {
    studies: Arc<RwLock<BTreeMap<String, Arc<Study>>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a study under its own id, replacing any previous one.
    pub fn insert(&self, study: Study) -> Arc<Study> {
        let study = Arc::new(study);
        self.studies
            .write()
            .expect("registry lock poisoned")
            .insert(study.id().to_string(), Arc::clone(&study));
        study
    }

    pub fn get(&self, id: &str) -> Option<Arc<Study>> {
        self.studies.read().expect("registry lock poisoned").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.studies.read().expect("registry lock poisoned").keys().cloned().collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown study `{0}`")]
    UnknownStudy(String),
    #[error("no route for `{0}`")]
    NoRoute(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownStudy(_) | ApiError::NoRoute(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Study(e) => match e {
                StudyError::UnknownAnnotator(_) | StudyError::UnknownTask(_) | StudyError::UnknownArticle(_) => {
                    StatusCode::NOT_FOUND
                }
                StudyError::NotAssigned { .. } => StatusCode::FORBIDDEN,
                StudyError::PairsIncomplete { .. } => StatusCode::CONFLICT,
                StudyError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownStudy(_) => "unknown_study",
            ApiError::NoRoute(_) => "no_route",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal",
            ApiError::Study(e) => match e {
                StudyError::UnknownAnnotator(_) => "unknown_annotator",
                StudyError::UnknownTask(_) => "unknown_task",
                StudyError::UnknownArticle(_) => "unknown_article",
                StudyError::NotAssigned { .. } => "not_assigned",
                StudyError::PairsIncomplete { .. } => "pairs_incomplete",
                StudyError::Invalid(_) => "invalid",
                StudyError::Log { .. } => "log",
                _ => "study",
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::BadRequest(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::BadRequest(r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn study(registry: &Registry, id: &str) -> Result<Arc<Study>, ApiError> {
    registry.get(id).ok_or_else(|| ApiError::UnknownStudy(id.to_string()))
}

/// Runs a log-writing study call off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StudyError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct NextTaskQuery {
    annotator: String,
}

async fn next_task(
    State(reg): State<Registry>,
    Path(id): Path<String>,
    query: Result<Query<NextTaskQuery>, QueryRejection>,
) -> ApiResult<NextTask> {
    let Query(q) = query?;
    Ok(Json(study(&reg, &id)?.next_task(&q.annotator)?))
}

async fn labels(
    State(reg): State<Registry>,
    Path(id): Path<String>,
    body: Result<Json<LabelSubmission>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(sub) = body?;
    let s = study(&reg, &id)?;
    let out = blocking(move || s.submit_label(sub)).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn verdicts(
    State(reg): State<Registry>,
    Path(id): Path<String>,
    body: Result<Json<VerdictSubmission>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(sub) = body?;
    let s = study(&reg, &id)?;
    let out = blocking(move || s.submit_verdict(sub)).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn stats(State(reg): State<Registry>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(study(&reg, &id)?.stats()).into_response())
}

async fn progress(State(reg): State<Registry>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(study(&reg, &id)?.progress()).into_response())
}

async fn list(State(reg): State<Registry>) -> Json<Vec<String>> {
    Json(reg.ids())
}

async fn fallback(uri: axum::http::Uri) -> ApiError {
    ApiError::NoRoute(uri.path().to_string())
}

/// The study API. CORS is open so a separately hosted UI can call it.
pub fn router(registry: Registry) -> Router {
    Router::new()
        .route("/studies", get(list))
        .route("/study/{id}/next-task", get(next_task))
        .route("/study/{id}/labels", post(labels))
        .route("/study/{id}/verdicts", post(verdicts))
        .route("/study/{id}/stats", get(stats))
        .route("/study/{id}/progress", get(progress))
        .fallback(fallback)
        .layer(CorsLayer::permissive())
        .with_state(registry)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    registry: Registry,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves until Ctrl-C.
pub fn run_blocking(addr: &str, registry: Registry) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("study api listening on http://{}", listener.local_addr()?);
        serve(listener, registry, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
