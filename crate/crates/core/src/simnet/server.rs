//! Loopback HTTP front-ends for simulated engines.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query as QueryParams, State};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::{SimEngine, SimScenario};
use crate::dispatcher::LocalEngine;
use crate::error::{Error, Result};
use crate::model::{tokenize, EngineDescriptor};

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    s: String,
    count: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimItem {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimResponse {
    pub items: Vec<SimItem>,
}

async fn search(State(engine): State<Arc<SimEngine>>, QueryParams(params): QueryParams<SearchParams>) -> Json<SimResponse> {
    tokio::time::sleep(engine.latency()).await;
    let terms = tokenize(&params.s);
    let count = params.count.unwrap_or(engine.spec.top_k);
    let items = engine
        .ranked(&terms, count)
        .into_iter()
        .map(|doc| SimItem {
            url: doc.url.clone(),
            title: doc.title.clone(),
            snippet: doc.snippet(),
        })
        .collect();
    Json(SimResponse { items })
}

pub fn sim_router(engine: Arc<SimEngine>) -> Router {
    Router::new()
        .route("/search", get(search))
        .with_state(engine)
}

/// Running simulated engines. Servers stop when this value is dropped.
pub struct SimNet {
    endpoints: Vec<(String, String)>,
    tasks: Vec<JoinHandle<()>>,
}

impl SimNet {
    /// `(engine_id, base_url)` pairs in scenario order. Each base URL
    /// answers `GET ?s={query}&count={n}`.
    pub fn endpoints(&self) -> &[(String, String)] {
        &self.endpoints
    }

    pub fn base_url(&self, engine_id: &str) -> Option<&str> {
        self.endpoints
            .iter()
            .find(|(id, _)| id == engine_id)
            .map(|(_, url)| url.as_str())
    }

    /// GET descriptors wired to the running servers, with the default parser.
    pub fn descriptors(&self, timeout: Duration) -> Vec<EngineDescriptor> {
        self.endpoints
            .iter()
            .map(|(id, base)| EngineDescriptor::http_get(id, &format!("{base}?s={{query}}"), timeout.as_millis().max(1) as u64))
            .collect()
    }

    pub fn shutdown(self) {}
}

impl Drop for SimNet {
    fn drop(&mut self) {
        for task in &self.tasks {
            task.abort();
        }
    }
}

/// Starts one loopback server per scenario engine on an ephemeral port.
pub async fn serve_sim_engines(scenario: &SimScenario) -> Result<SimNet> {
    let mut endpoints = Vec::with_capacity(scenario.engines.len());
    let mut tasks = Vec::with_capacity(scenario.engines.len());
    for engine in scenario.sim_engines() {
        let listener = TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
            .await
            .map_err(|e| Error::BindFailure(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| Error::BindFailure(e.to_string()))?;
        let id = engine.engine_id().to_string();
        let app = sim_router(Arc::new(engine));
        tasks.push(tokio::spawn(async move {
            if let Err(err) = axum::serve(listener, app).await {
                tracing::error!(error = %err, "simulated engine stopped");
            }
        }));
        endpoints.push((id, format!("http://{addr}/search")));
    }
    Ok(SimNet { endpoints, tasks })
}
