use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use super::error::ApiError;
use super::repo::{decode_id, Repository};
use crate::classify::RuntimeStrategy;
use crate::packager::RuntimeFeature;

type Repo = State<Arc<Repository>>;
type ApiResult = Result<Response, ApiError>;

const MAX_UPLOAD: usize = 256 * 1024 * 1024;

pub fn router(repo: Arc<Repository>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/diagnostics", get(diagnostics))
        .route("/shells", get(shells))
        .route("/shells/{id}/elements/{path}/value", get(get_value).patch(patch_value))
        .route("/shells/{id}/elements/{path}/invoke", post(invoke))
        .route("/shells/{id}/sync", get(sync_status))
        .route("/subscriptions", post(subscribe).get(subscriptions))
        .route("/subscriptions/{id}", delete(unsubscribe))
        .route("/packages", post(upload))
        .route("/packages/{id}", get(export))
        .route("/packages/{id}/report", get(report))
        .route("/extensions/{name}", get(extension))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(repo)
}

fn authorize(repo: &Repository, headers: &HeaderMap) -> Result<(), ApiError> {
    repo.check_token(headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()))
}

fn require_api(repo: &Repository) -> Result<(), ApiError> {
    if repo.config().features.contains(&RuntimeFeature::Api) {
        Ok(())
    } else {
        Err(ApiError::FeatureUnavailable("api".into()))
    }
}

fn parse_json(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("body is not JSON: {e}")))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn diagnostics(State(repo): Repo) -> Json<Value> {
    Json(repo.diagnostics().await)
}

async fn shells(State(repo): Repo) -> ApiResult {
    require_api(&repo)?;
    Ok(Json(repo.shells().await).into_response())
}

async fn get_value(State(repo): Repo, Path((id, path)): Path<(String, String)>) -> ApiResult {
    require_api(&repo)?;
    Ok(Json(repo.get_value(&decode_id(&id)?, &path).await?).into_response())
}

async fn patch_value(State(repo): Repo, Path((id, path)): Path<(String, String)>, headers: HeaderMap, body: Bytes) -> ApiResult {
    require_api(&repo)?;
    authorize(&repo, &headers)?;
    let shell = decode_id(&id)?;
    let body = parse_json(&body)?;
    Ok(Json(repo.patch_value(&shell, &path, &body).await?).into_response())
}

async fn invoke(State(repo): Repo, Path((id, path)): Path<(String, String)>, headers: HeaderMap, body: Bytes) -> ApiResult {
    require_api(&repo)?;
    authorize(&repo, &headers)?;
    let shell = decode_id(&id)?;
    let args = if body.is_empty() { json!({}) } else { parse_json(&body)? };
    Ok(Json(repo.invoke(&shell, &path, args).await?).into_response())
}

async fn sync_status(State(repo): Repo, Path(id): Path<String>) -> ApiResult {
    Ok(Json(repo.sync(&decode_id(&id)?).await?).into_response())
}

async fn subscribe(State(repo): Repo, headers: HeaderMap, body: Bytes) -> ApiResult {
    authorize(&repo, &headers)?;
    let sub = repo.subscribe(&parse_json(&body)?)?;
    Ok((StatusCode::CREATED, Json(sub)).into_response())
}

async fn subscriptions(State(repo): Repo) -> ApiResult {
    Ok(Json(repo.subscriptions()?).into_response())
}

async fn unsubscribe(State(repo): Repo, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    authorize(&repo, &headers)?;
    repo.unsubscribe(&id)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn upload(State(repo): Repo, headers: HeaderMap, body: Bytes) -> ApiResult {
    authorize(&repo, &headers)?;
    let shells = repo.upload(&body).await?;
    Ok((StatusCode::CREATED, Json(json!({ "shells": shells }))).into_response())
}

async fn export(State(repo): Repo, Path(id): Path<String>) -> ApiResult {
    let (bytes, report) = repo.export(&decode_id(&id)?).await?;
    let dropped = report.dropped.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let mut resp = (
        [(header::CONTENT_TYPE, "application/zip"), (header::CONTENT_DISPOSITION, "attachment; filename=\"package.aaspkg\"")],
        bytes,
    )
        .into_response();
    if let Ok(v) = dropped.parse() {
        resp.headers_mut().insert("x-shellforge-dropped", v);
    }
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    to: Option<String>,
}

async fn report(State(repo): Repo, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> ApiResult {
    let to = match q.to.as_deref() {
        None => RuntimeStrategy::Passive,
        Some(s) => s.parse().map_err(|e: String| ApiError::BadRequest(e))?,
    };
    Ok(Json(repo.conversion_report(&decode_id(&id)?, to).await?).into_response())
}

async fn extension(State(repo): Repo, Path(name): Path<String>) -> ApiResult {
    Ok(Json(repo.extension(&name).await?).into_response())
}
