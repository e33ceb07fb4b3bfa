//! Per-engine counters and learned selection state, persisted as JSON.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use metafuse_core::model::RankedList;
use metafuse_core::selector::{update_learned, EngineRepresentative};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub engine_id: String,
    pub queries_served: u64,
    pub mean_latency_ms: f64,
    pub error_count: u64,
    pub representative: EngineRepresentative,
}

impl EngineStats {
    pub fn new(representative: EngineRepresentative) -> Self {
        EngineStats {
            engine_id: representative.engine_id.clone(),
            queries_served: 0,
            mean_latency_ms: 0.0,
            error_count: 0,
            representative,
        }
    }

    /// Folds one dispatch outcome into the counters. Latency is averaged
    /// over successful answers only.
    pub fn record(&mut self, list: &RankedList, observed_relevance: f64) -> Result<(), ServiceError> {
        self.queries_served += 1;
        if list.status.is_ok() {
            let ok = self.queries_served - self.error_count;
            self.mean_latency_ms += (list.latency_ms - self.mean_latency_ms) / ok as f64;
        } else {
            self.error_count += 1;
        }
        self.representative = update_learned(&self.representative, observed_relevance)?;
        Ok(())
    }
}

/// Writes `stats` to `path` through a sibling temp file and a rename, so a
/// crash never leaves a truncated file behind.
pub fn persist_stats(path: &Path, stats: &[EngineStats]) -> Result<(), ServiceError> {
    let fail = |e: &dyn std::fmt::Display| ServiceError::PersistFailure(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    serde_json::to_writer_pretty(&mut tmp, stats).map_err(|e| fail(&e))?;
    tmp.write_all(b"\n").map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

/// Reads persisted stats. A missing file yields an empty list.
pub fn load_stats(path: &Path) -> Result<Vec<EngineStats>, ServiceError> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| ServiceError::PersistFailure(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(ServiceError::PersistFailure(format!("{}: {e}", path.display()))),
    }
}

/// Shared stats keyed by engine id, flushed to disk after every update.
pub struct StatsStore {
    path: PathBuf,
    inner: Mutex<BTreeMap<String, EngineStats>>,
}

impl StatsStore {
    pub fn new(path: PathBuf, stats: impl IntoIterator<Item = EngineStats>) -> Self {
        StatsStore {
            path,
            inner: Mutex::new(stats.into_iter().map(|s| (s.engine_id.clone(), s)).collect()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub async fn snapshot(&self) -> Vec<EngineStats> {
        self.inner.lock().await.values().cloned().collect()
    }

    pub async fn representatives(&self, ids: &[&str]) -> Vec<EngineRepresentative> {
        let guard = self.inner.lock().await;
        ids.iter()
            .map(|id| match guard.get(*id) {
                Some(s) => s.representative.clone(),
                None => EngineRepresentative::empty(id),
            })
            .collect()
    }

    /// Applies one search's outcomes and persists before returning.
    pub async fn record(&self, outcomes: &[(RankedList, f64)]) -> Result<(), ServiceError> {
        let mut guard = self.inner.lock().await;
        for (list, relevance) in outcomes {
            guard
                .entry(list.engine_id.clone())
                .or_insert_with(|| EngineStats::new(EngineRepresentative::empty(&list.engine_id)))
                .record(list, *relevance)?;
        }
        let all: Vec<EngineStats> = guard.values().cloned().collect();
        persist_stats(&self.path, &all)
    }
}
