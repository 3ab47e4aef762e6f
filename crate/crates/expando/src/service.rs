//! HTTP API. Request bodies are parsed by hand so that every malformed
//! request gets a coded [`ApiError`] body.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use expando_core::engine::ExpansionRequest;
use expando_core::tree::{Anchor, QuestionKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::api::{ApiError, ErrorCode};
use crate::app::{App, AppError, ExpansionResult};
use crate::store::PaperStatus;

#[derive(Clone)]
struct Shared {
    app: Arc<App>,
    ingest_slots: Arc<Semaphore>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking application work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            internal: true,
            ..ApiError::new(ErrorCode::ProviderUnavailable, 500, format!("worker failed: {e}"), true)
        }),
    }
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> ApiResult<T> {
    p.map(|Path(v)| v).map_err(|e| ApiError::validation(e.body_text()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Define,
    Expand,
    Why,
    Suggested,
    Custom,
}

/// Body of `POST /papers/{id}/trees/{tree_id}/expansions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionBody {
    pub anchor: Anchor,
    pub kind: KindName,
    #[serde(default)]
    pub custom_question: Option<String>,
    #[serde(default)]
    pub suggested_question: Option<String>,
    #[serde(default)]
    pub expected_text: Option<String>,
    #[serde(default)]
    pub bypass_cache: bool,
}

impl ExpansionBody {
    pub fn into_request(self) -> ApiResult<ExpansionRequest> {
        let kind = match (self.kind, self.custom_question) {
            (KindName::Custom, Some(q)) => QuestionKind::Custom(q),
            (KindName::Custom, None) => return Err(ApiError::validation("kind 'custom' needs custom_question")),
            (_, Some(_)) => return Err(ApiError::validation("custom_question is only valid with kind 'custom'")),
            (KindName::Define, None) => QuestionKind::Define,
            (KindName::Expand, None) => QuestionKind::Expand,
            (KindName::Why, None) => QuestionKind::Why,
            (KindName::Suggested, None) => QuestionKind::Suggested,
        };
        Ok(ExpansionRequest {
            anchor: self.anchor,
            kind,
            suggested_question: self.suggested_question,
            expected_text: self.expected_text,
            bypass_cache: self.bypass_cache,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuggestBody {
    anchor: Anchor,
    #[serde(default)]
    tree_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Accepted {
    paper_id: String,
    status: PaperStatus,
}

#[derive(Debug, Deserialize)]
struct ListParams {
    query: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

pub fn router(app: Arc<App>) -> Router {
    let workers = app.config.service.ingest_workers.max(1);
    let shared = Shared { app, ingest_slots: Arc::new(Semaphore::new(workers)) };
    Router::new()
        .route("/papers", post(submit_paper).get(list_papers))
        .route("/papers/{paper_id}", get(get_paper))
        .route("/papers/{paper_id}/abstract", get(get_abstract))
        .route("/papers/{paper_id}/suggest", post(suggest))
        .route("/papers/{paper_id}/trees/{tree_id}", get(get_tree))
        .route("/papers/{paper_id}/trees/{tree_id}/expansions", post(create_expansion))
        .route("/papers/{paper_id}/trees/{tree_id}/nodes/{node_id}/collapse", post(collapse))
        .route("/papers/{paper_id}/trees/{tree_id}/nodes/{node_id}/expand", post(expand_again))
        .route("/expansions/{node_id}", get(get_node).delete(delete_node))
        .route("/expansions/{node_id}/attribution", get(get_attribution))
        .route("/healthz", get(|| async { "ok" }))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorCode::ValidationFailed, 405, "method not allowed", false)
        })
        .with_state(shared)
}

async fn submit_paper(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let app = s.app.clone();
    let (submission, paper_id) = blocking(move || {
        let submission = app.prepare_submission(&body)?;
        let id = app.begin_ingest(&submission)?;
        Ok((submission, id))
    })
    .await?;
    let app = s.app.clone();
    let slots = s.ingest_slots.clone();
    tokio::spawn(async move {
        let _permit = slots.acquire_owned().await;
        // Failures are recorded on the paper itself.
        let _ = tokio::task::spawn_blocking(move || app.run_ingest(submission)).await;
    });
    Ok((StatusCode::ACCEPTED, Json(Accepted { paper_id, status: PaperStatus::Processing })).into_response())
}

async fn list_papers(
    State(s): State<Shared>,
    params: Result<Query<ListParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(p) = params.map_err(|e| ApiError::validation(e.body_text()))?;
    let page = s.app.list_papers(p.query.as_deref(), p.page.unwrap_or(1), p.page_size.unwrap_or(20))?;
    Ok(Json(page).into_response())
}

async fn get_paper(State(s): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    let id = path(id)?;
    Ok(Json(s.app.paper(&id)?).into_response())
}

async fn get_abstract(State(s): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    let id = path(id)?;
    Ok(Json(s.app.abstract_view(&id)?).into_response())
}

async fn suggest(
    State(s): State<Shared>,
    id: Result<Path<String>, PathRejection>,
    body: Bytes,
) -> ApiResult<Response> {
    let id = path(id)?;
    let req: SuggestBody = json_body(&body)?;
    let app = s.app.clone();
    let question = blocking(move || app.suggest(&id, req.tree_id.as_deref(), &req.anchor)).await?;
    Ok(Json(HashMap::from([("question", question)])).into_response())
}

async fn get_tree(
    State(s): State<Shared>,
    ids: Result<Path<(String, String)>, PathRejection>,
) -> ApiResult<Response> {
    let (paper_id, tree_id) = path(ids)?;
    Ok(Json(s.app.tree(&paper_id, &tree_id)?).into_response())
}

async fn create_expansion(
    State(s): State<Shared>,
    ids: Result<Path<(String, String)>, PathRejection>,
    body: Bytes,
) -> ApiResult<Response> {
    let (paper_id, tree_id) = path(ids)?;
    let request = json_body::<ExpansionBody>(&body)?.into_request()?;
    let app = s.app.clone();
    match blocking(move || app.create_expansion(&paper_id, &tree_id, &request)).await? {
        ExpansionResult::Created(view) => Ok((StatusCode::CREATED, Json(view)).into_response()),
        ExpansionResult::NoAnswer(event) => Ok((
            StatusCode::OK,
            Json(ApiError::new(
                ErrorCode::NoAnswer,
                200,
                format!("the paper does not answer '{}'", event.question),
                false,
            )),
        )
            .into_response()),
    }
}

async fn collapse(
    State(s): State<Shared>,
    ids: Result<Path<(String, String, String)>, PathRejection>,
) -> ApiResult<Response> {
    let (paper_id, tree_id, node_id) = path(ids)?;
    Ok(Json(s.app.collapse(&paper_id, &tree_id, &node_id)?).into_response())
}

async fn expand_again(
    State(s): State<Shared>,
    ids: Result<Path<(String, String, String)>, PathRejection>,
) -> ApiResult<Response> {
    let (paper_id, tree_id, node_id) = path(ids)?;
    Ok(Json(s.app.expand_again(&paper_id, &tree_id, &node_id)?).into_response())
}

async fn get_node(State(s): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    let id = path(id)?;
    Ok(Json(s.app.node(&id)?).into_response())
}

async fn get_attribution(State(s): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    let id = path(id)?;
    Ok(Json(s.app.attribution(&id)?).into_response())
}

async fn delete_node(State(s): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Response> {
    let id = path(id)?;
    s.app.delete(&id)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

/// Serves until Ctrl-C.
pub async fn serve(app: Arc<App>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
