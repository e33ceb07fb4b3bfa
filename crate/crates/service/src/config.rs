use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use metafuse_core::allocator::DEFAULT_MIN_PER_ENGINE;
use metafuse_core::model::{EndpointKind, EngineDescriptor, FusionMethod};
use metafuse_core::selector::SelectionApproach;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Environment variable that overrides the config file path.
pub const CONFIG_ENV: &str = "METAFUSE_CONFIG";
pub const DEFAULT_CONFIG_PATH: &str = "metafuse.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub listen_port: u16,
    pub engines: Vec<EngineDescriptor>,
    #[serde(default)]
    pub selection_approach: SelectionApproach,
    #[serde(default = "default_max_engines")]
    pub max_engines: usize,
    #[serde(default = "default_total_quota")]
    pub total_quota: usize,
    #[serde(default = "default_min_per_engine")]
    pub min_per_engine: usize,
    #[serde(default)]
    pub default_fusion: FusionMethod,
    #[serde(default = "default_deadline_ms")]
    pub deadline_ms: u64,
    pub stats_path: PathBuf,
    /// Fixed per-engine result counts that bypass proportional allocation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub quota_overrides: BTreeMap<String, usize>,
    /// Scenario backing `in_process_sim` engines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<PathBuf>,
    /// Static files served at `/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_dir: Option<PathBuf>,
}

fn default_max_engines() -> usize {
    5
}

fn default_total_quota() -> usize {
    30
}

fn default_min_per_engine() -> usize {
    DEFAULT_MIN_PER_ENGINE
}

fn default_deadline_ms() -> u64 {
    3_000
}

impl AppConfig {
    /// Minimal config for the given engines; stats go to `stats_path`.
    pub fn new(engines: Vec<EngineDescriptor>, stats_path: impl Into<PathBuf>) -> Self {
        AppConfig {
            listen_port: 8080,
            max_engines: engines.len().max(1),
            engines,
            selection_approach: SelectionApproach::default(),
            total_quota: default_total_quota(),
            min_per_engine: default_min_per_engine(),
            default_fusion: FusionMethod::default(),
            deadline_ms: default_deadline_ms(),
            stats_path: stats_path.into(),
            quota_overrides: BTreeMap::new(),
            scenario_path: None,
            ui_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let invalid = |field: String, message: String| Err(ServiceError::ConfigInvalid { field, message });
        if self.listen_port == 0 {
            return invalid("listen_port".into(), "must be in [1, 65535]".into());
        }
        if self.max_engines == 0 {
            return invalid("max_engines".into(), "must be at least 1".into());
        }
        if self.deadline_ms == 0 {
            return invalid("deadline_ms".into(), "must be positive".into());
        }
        if self.total_quota < self.min_per_engine * self.max_engines {
            return invalid(
                "total_quota".into(),
                format!(
                    "{} is below min_per_engine ({}) x max_engines ({})",
                    self.total_quota, self.min_per_engine, self.max_engines
                ),
            );
        }
        let mut ids = HashSet::new();
        for (i, engine) in self.engines.iter().enumerate() {
            if !ids.insert(engine.id.as_str()) {
                return invalid(format!("engines[{i}].id"), format!("duplicate engine id `{}`", engine.id));
            }
            if let Err(err) = engine.validate() {
                return invalid(format!("engines[{i}]"), err.to_string());
            }
            if engine.endpoint_kind == EndpointKind::InProcessSim && self.scenario_path.is_none() {
                return invalid(
                    "scenario_path".into(),
                    format!("required by in_process_sim engine `{}`", engine.id),
                );
            }
        }
        if let Some(unknown) = self.quota_overrides.keys().find(|id| !ids.contains(id.as_str())) {
            return invalid(format!("quota_overrides.{unknown}"), "unknown engine".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: AppConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            ServiceError::ConfigInvalid {
                field: if field == "." { "<root>".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// Reads and validates the config at `path`.
pub fn load_config(path: &Path) -> Result<AppConfig, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::ConfigInvalid {
        field: "<file>".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    AppConfig::from_json(&text)
}

/// `METAFUSE_CONFIG` when set, else the explicit path, else `metafuse.json`.
pub fn resolve_config_path(explicit: Option<&Path>) -> PathBuf {
    match std::env::var_os(CONFIG_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => explicit.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_PATH)),
    }
}
