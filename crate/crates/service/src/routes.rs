use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::response::Html;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use metafuse_core::api::{EngineToggle, MetricsRunRequest, MetricsRunResponse, SearchRequest};
use metafuse_core::model::{EngineDescriptor, MergedResponse};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::state::AppState;
use crate::stats::EngineStats;

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><title>metafuse</title></head>\n<body><h1>metafuse</h1><p>POST /api/search with {\"query\": \"...\"}.</p></body></html>\n";

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn search(State(state): State<Arc<AppState>>, payload: Result<Json<SearchRequest>, JsonRejection>) -> Result<Json<MergedResponse>, ServiceError> {
    let request = body(payload)?;
    Ok(Json(state.search(&request).await?))
}

async fn list_engines(State(state): State<Arc<AppState>>) -> Json<Vec<EngineDescriptor>> {
    Json(state.engines().await)
}

async fn toggle_engine(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<EngineToggle>, JsonRejection>,
) -> Result<Json<EngineDescriptor>, ServiceError> {
    let toggle = body(payload)?;
    Ok(Json(state.set_enabled(&id, toggle.enabled).await?))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Vec<EngineStats>> {
    Json(state.stats.snapshot().await)
}

async fn run_metrics(State(state): State<Arc<AppState>>, payload: Result<Json<MetricsRunRequest>, JsonRejection>) -> Result<Json<MetricsRunResponse>, ServiceError> {
    let request = body(payload)?;
    Ok(Json(state.run_metrics(&request).await?))
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Arc<AppState>) -> Router {
    let ui_dir = state.config.ui_dir.clone();
    let api = Router::new()
        .route("/api/search", post(search))
        .route("/api/engines", get(list_engines))
        .route("/api/engines/{id}", put(toggle_engine))
        .route("/api/stats", get(stats))
        .route("/api/metrics/run", post(run_metrics))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}
