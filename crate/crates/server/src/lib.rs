//! JSON API over a [`Recommender`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/api/generate` | `{lyrics, seed?, k?}` | `{result_id, score, candidates, seed, k, model}` |
//! | POST | `/api/recompose` | `{result_id, overrides}` | same as generate |
//! | GET | `/api/score/{id}` | | canonical score JSON |
//! | GET | `/api/score/{id}/midi` | | `audio/midi` bytes |
//! | GET | `/api/health` | | `{status, model}` |
//!
//! Failures reply `{"error": "..."}` with status 400 or 404.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use songsmith::recommend::{GenerationDocument, GenerationResult, Recommender, DEFAULT_K};
use songsmith::score::{score_to_json, write_midi, Override};
use songsmith::Error;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub lyrics: String,
    pub seed: Option<u64>,
    pub k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecomposeRequest {
    pub result_id: String,
    pub overrides: Vec<Override>,
}

#[derive(Serialize)]
struct ResultReply {
    result_id: String,
    #[serde(flatten)]
    result: GenerationDocument,
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'static str,
    model: &'a str,
}

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type Svc = Arc<Recommender>;

fn reply(id: String, result: &GenerationResult) -> Json<ResultReply> {
    Json(ResultReply {
        result_id: id,
        result: GenerationDocument::from(result),
    })
}

async fn generate(
    State(svc): State<Svc>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<ResultReply>, ApiError> {
    let Json(req) = body?;
    let (id, result) = tokio::task::spawn_blocking(move || {
        svc.generate(&req.lyrics, req.seed.unwrap_or(0), req.k.unwrap_or(DEFAULT_K))
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(reply(id, &result))
}

async fn recompose(
    State(svc): State<Svc>,
    body: Result<Json<RecomposeRequest>, JsonRejection>,
) -> Result<Json<ResultReply>, ApiError> {
    let Json(req) = body?;
    let (id, result) = svc.recompose(&req.result_id, &req.overrides)?;
    Ok(reply(id, &result))
}

async fn score(State(svc): State<Svc>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let result = svc.get(&id)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        score_to_json(&result.score),
    )
        .into_response())
}

async fn midi(State(svc): State<Svc>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let result = svc.get(&id)?;
    Ok(([(header::CONTENT_TYPE, "audio/midi")], write_midi(&result.score)).into_response())
}

async fn health(State(svc): State<Svc>) -> Response {
    Json(Health {
        status: "ok",
        model: svc.fingerprint(),
    })
    .into_response()
}

pub fn router(svc: Svc) -> Router {
    Router::new()
        .route("/api/generate", post(generate))
        .route("/api/recompose", post(recompose))
        .route("/api/score/{id}", get(score))
        .route("/api/score/{id}/midi", get(midi))
        .route("/api/health", get(health))
        .with_state(svc)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, svc: Svc) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).await
}
