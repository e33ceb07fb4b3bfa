//! Request and response bodies of the HTTP API, shared by the service and
//! its clients.

use serde::{Deserialize, Serialize};

use crate::model::{FusionMethod, MergeMode};
use crate::report::Table2Report;

pub const DEFAULT_LIMIT: usize = 10;

/// Body of `POST /api/search`. Omitted fields fall back to server defaults;
/// a present `engines` list pins the selection.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engines: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<MergeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl SearchRequest {
    pub fn new(query: &str) -> Self {
        SearchRequest {
            query: query.to_string(),
            ..SearchRequest::default()
        }
    }
}

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

/// Body of `PUT /api/engines/{id}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineToggle {
    pub enabled: bool,
}

/// Body of `POST /api/metrics/run`. `scenario` is a recipe or a
/// materialized scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRunRequest {
    pub scenario: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionMethod>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRunResponse {
    pub report: Table2Report,
    pub table: String,
}
