//! HTTP routes.
//!
//! | method | path                          |
//! |--------|-------------------------------|
//! | POST   | `/surveys`                    |
//! | GET    | `/surveys/{id}`               |
//! | POST   | `/surveys/{id}/close`         |
//! | GET    | `/surveys/{id}/session`       |
//! | GET    | `/surveys/{id}/export?what=`  |
//! | GET    | `/sessions/{id}/bootstrap`    |
//! | POST   | `/sessions/{id}/events`       |
//! | POST   | `/sessions/{id}/submit`       |
//!
//! Errors carry `{"error": <code>, "message": <text>, "detail": ...}`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qs_core::{IllegalEvent, SurveyConfig};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::service::{ExportKind, Service, ServiceError, SubmitRequest};

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSurvey(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::DuplicateSurvey(_)
            | ServiceError::SurveyClosed(_)
            | ServiceError::SessionSubmitted(_)
            | ServiceError::SessionAbandoned(_) => StatusCode::CONFLICT,
            ServiceError::Illegal(IllegalEvent::AlreadySubmitted) => StatusCode::CONFLICT,
            ServiceError::InvalidSurvey(_) | ServiceError::Illegal(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Storage(_) | ServiceError::CorruptSession { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSurvey(_) => "unknown_survey",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::DuplicateSurvey(_) => "duplicate_survey",
            ServiceError::SurveyClosed(_) => "survey_closed",
            ServiceError::InvalidSurvey(_) => "invalid_survey",
            ServiceError::SessionSubmitted(_) => "already_submitted",
            ServiceError::SessionAbandoned(_) => "session_abandoned",
            ServiceError::Illegal(IllegalEvent::OverBudget(_)) => "over_budget",
            ServiceError::Illegal(_) => "illegal_event",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Storage(_) | ServiceError::CorruptSession { .. } => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let detail = match &self {
            ServiceError::Illegal(e) => serde_json::to_value(e).unwrap_or(Value::Null),
            _ => Value::Null,
        };
        (status, Json(json!({"error": self.code(), "message": self.to_string(), "detail": detail}))).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

/// Router over `service`; `cors_origins` lists browser origins allowed to
/// call it.
pub fn router(service: Arc<Service>, cors_origins: &[String]) -> Router {
    let app = Router::new()
        .route("/surveys", post(create_survey))
        .route("/surveys/{id}", get(survey_summary))
        .route("/surveys/{id}/close", post(close_survey))
        .route("/surveys/{id}/session", get(open_session))
        .route("/surveys/{id}/export", get(export))
        .route("/sessions/{id}/bootstrap", get(bootstrap))
        .route("/sessions/{id}/events", post(ingest))
        .route("/sessions/{id}/submit", post(submit))
        .with_state(service);
    if cors_origins.is_empty() {
        return app;
    }
    let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    app.layer(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

type Svc = State<Arc<Service>>;

async fn create_survey(State(svc): Svc, payload: Result<Json<SurveyConfig>, JsonRejection>) -> Result<Response, ServiceError> {
    let id = svc.create_survey(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(json!({"survey_id": id})).into_response()).into_response())
}

async fn survey_summary(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.survey_summary(&id)?).into_response())
}

async fn close_survey(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    svc.close_survey(&id)?;
    Ok(Json(svc.survey_summary(&id)?).into_response())
}

async fn open_session(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok((StatusCode::CREATED, Json(svc.open_session(&id)?)).into_response())
}

async fn bootstrap(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.bootstrap(&id)?).into_response())
}

/// Accepts a JSON array of event records, or `{"events": [...]}`.
async fn ingest(
    State(svc): Svc,
    Path(id): Path<String>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let batch = match body(payload)? {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove("events") {
            Some(Value::Array(items)) => items,
            _ => return Err(ServiceError::BadRequest("expected an array of events".into())),
        },
        _ => return Err(ServiceError::BadRequest("expected an array of events".into())),
    };
    let outcome = svc.ingest(&id, batch)?;
    let status = if outcome.rejection.is_some() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::OK };
    Ok((status, Json(outcome)).into_response())
}

async fn submit(
    State(svc): Svc,
    Path(id): Path<String>,
    payload: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.submit(&id, body(payload)?)?).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    what: Option<String>,
}

async fn export(State(svc): Svc, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Result<Response, ServiceError> {
    let what: ExportKind = q
        .what
        .as_deref()
        .ok_or_else(|| ServiceError::BadRequest("missing `what` (events, metrics, actions or tally)".into()))?
        .parse()?;
    let out = svc.export(&id, what)?;
    Ok(([(header::CONTENT_TYPE, out.content_type)], out.body).into_response())
}
