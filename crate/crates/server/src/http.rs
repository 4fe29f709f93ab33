//! HTTP/JSON API over the running hub.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use floorspace_core::api::{ConfigurationView, ErrorBody, EventsPage, GainsView, PinRequest, StatusReport, UnpinRequest};
use floorspace_core::assigner::AssignerError;
use floorspace_core::engine::EngineError;
use serde::Deserialize;

use crate::hub::HubError;
use crate::service::Shared;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/status", get(status))
        .route("/api/configuration", get(configuration))
        .route("/api/gains", get(gains))
        .route("/api/events", get(events))
        .route("/api/pin", post(pin))
        .route("/api/unpin", post(unpin))
        .with_state(shared)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        let code = match &e {
            HubError::UnknownName(_) | HubError::UnknownParticipant(_) => StatusCode::NOT_FOUND,
            HubError::Engine(EngineError::UnknownName(_)) => StatusCode::NOT_FOUND,
            HubError::Engine(EngineError::Assigner(AssignerError::PermissionDenied(_))) | HubError::NotOwner(_) => {
                StatusCode::FORBIDDEN
            }
            HubError::Engine(EngineError::Assigner(AssignerError::NotPinned)) => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(code, e.to_string())
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn status(State(s): State<Arc<Shared>>) -> Json<StatusReport> {
    Json(s.hub().status())
}

async fn configuration(State(s): State<Arc<Shared>>) -> Json<Option<ConfigurationView>> {
    Json(s.hub().configuration())
}

async fn gains(State(s): State<Arc<Shared>>) -> Json<GainsView> {
    Json(s.hub().gains())
}

#[derive(Debug, Deserialize)]
struct Since {
    #[serde(default)]
    since: usize,
}

async fn events(State(s): State<Arc<Shared>>, Query(q): Query<Since>) -> Json<EventsPage> {
    let hub = s.hub();
    let all = hub.events();
    let from = q.since.min(all.len());
    Json(EventsPage {
        from,
        events: all[from..].to_vec(),
        next: all.len(),
    })
}

async fn pin(State(s): State<Arc<Shared>>, Json(req): Json<PinRequest>) -> Result<StatusCode, ApiError> {
    s.hub().pin(&req.owner, &req.floors)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn unpin(State(s): State<Arc<Shared>>, Json(req): Json<UnpinRequest>) -> Result<StatusCode, ApiError> {
    s.hub().unpin(&req.owner)?;
    Ok(StatusCode::NO_CONTENT)
}
