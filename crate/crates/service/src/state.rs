//! Shared service state and the search pipeline.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;
use std::time::Instant;

use metafuse_core::allocator::allocate_with_overrides;
use metafuse_core::api::{MetricsRunRequest, MetricsRunResponse, SearchRequest, DEFAULT_LIMIT};
use metafuse_core::dispatcher::{DispatchPlan, Dispatcher};
use metafuse_core::merger::{fuse_rrf, merge, DEFAULT_RRF_K};
use metafuse_core::model::{EndpointKind, EngineDescriptor, MergeMode, MergedResponse, Query, RankedList};
use metafuse_core::report::{run_table2_report, ReportConfig};
use metafuse_core::selector::{build_representative_from_sample, select, select_user_fixed, SampledDoc};
use metafuse_core::simnet::{load_scenario, parse_scenario};
use tokio::sync::RwLock;

use crate::config::AppConfig;
use crate::error::ServiceError;
use crate::stats::{load_stats, EngineStats, StatsStore};

/// Documents sampled per simulated engine to seed its representative.
const SAMPLE_DOCS: usize = 200;

pub struct AppState {
    pub config: AppConfig,
    engines: RwLock<Vec<EngineDescriptor>>,
    dispatcher: Dispatcher,
    pub stats: StatsStore,
}

impl AppState {
    /// Wires engines, in-process simulators and persisted stats.
    pub fn new(config: AppConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let mut dispatcher = Dispatcher::new();
        let mut seeded = Vec::new();
        let sims: Vec<&EngineDescriptor> = config
            .engines
            .iter()
            .filter(|e| e.endpoint_kind == EndpointKind::InProcessSim)
            .collect();
        if !sims.is_empty() {
            let path = config.scenario_path.as_deref().expect("validated");
            let scenario = load_scenario(path, None).map_err(|e| ServiceError::ConfigInvalid {
                field: "scenario_path".into(),
                message: e.to_string(),
            })?;
            for descriptor in sims {
                let engine = scenario
                    .sim_engines()
                    .into_iter()
                    .find(|s| s.engine_id() == descriptor.id)
                    .ok_or_else(|| ServiceError::ConfigInvalid {
                        field: "engines".into(),
                        message: format!("scenario has no engine `{}`", descriptor.id),
                    })?;
                let sample: Vec<SampledDoc> = engine
                    .spec
                    .corpus
                    .iter()
                    .take(SAMPLE_DOCS)
                    .map(|d| (d.url.clone(), d.title.clone(), d.body.clone()))
                    .collect();
                if let Ok(mut rep) = build_representative_from_sample(&descriptor.id, &sample) {
                    rep.corpus_size = rep.corpus_size.max(engine.spec.corpus.len() as u64);
                    seeded.push(EngineStats::new(rep));
                }
                dispatcher = dispatcher.with_local(&descriptor.id, Arc::new(engine));
            }
        }

        // persisted stats win over freshly sampled representatives
        let mut stats: std::collections::BTreeMap<String, EngineStats> =
            seeded.into_iter().map(|s| (s.engine_id.clone(), s)).collect();
        for s in load_stats(&config.stats_path)? {
            stats.insert(s.engine_id.clone(), s);
        }

        Ok(AppState {
            engines: RwLock::new(config.engines.clone()),
            stats: StatsStore::new(config.stats_path.clone(), stats.into_values()),
            dispatcher,
            config,
        })
    }

    pub async fn engines(&self) -> Vec<EngineDescriptor> {
        self.engines.read().await.clone()
    }

    pub async fn set_enabled(&self, id: &str, enabled: bool) -> Result<EngineDescriptor, ServiceError> {
        let mut engines = self.engines.write().await;
        let engine = engines
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| ServiceError::UnknownEngine(id.to_string()))?;
        engine.enabled = enabled;
        Ok(engine.clone())
    }

    /// normalize, select, allocate, dispatch, merge, then record stats.
    pub async fn search(&self, request: &SearchRequest) -> Result<MergedResponse, ServiceError> {
        let started = Instant::now();
        let limit = request.limit.unwrap_or(DEFAULT_LIMIT);
        if limit == 0 {
            return Err(ServiceError::BadRequest("limit must be at least 1".into()));
        }
        let query = Query::new(
            &request.query,
            limit,
            request.mode.unwrap_or(MergeMode::Unified),
            request.fusion.unwrap_or(self.config.default_fusion),
        )
        .map_err(|_| ServiceError::EmptyQuery)?;

        let registered = self.engines().await;
        let enabled: Vec<EngineDescriptor> = registered.iter().filter(|e| e.enabled).cloned().collect();

        let selection = match request.engines.as_deref() {
            Some(pinned) if !pinned.is_empty() => {
                let known: HashSet<&str> = registered.iter().map(|e| e.id.as_str()).collect();
                if let Some(unknown) = pinned.iter().find(|id| !known.contains(id.as_str())) {
                    return Err(ServiceError::UnknownEngine(unknown.clone()));
                }
                let live: Vec<&String> = pinned.iter().filter(|id| enabled.iter().any(|e| &e.id == *id)).collect();
                if live.is_empty() {
                    return Err(ServiceError::NoEnginesAvailable("every requested engine is disabled".into()));
                }
                select_user_fixed(&live)?
            }
            _ => {
                if enabled.is_empty() {
                    return Err(ServiceError::NoEnginesAvailable("no engine is enabled".into()));
                }
                let ids: Vec<&str> = enabled.iter().map(|e| e.id.as_str()).collect();
                let reps = self.stats.representatives(&ids).await;
                select(self.config.selection_approach, &query, &reps, self.config.max_engines)?
            }
        };

        // an all-zero fallback may pick more engines than the floor was sized for
        let chosen = selection.chosen.len().max(1);
        let min_per_engine = self.config.min_per_engine.min(self.config.total_quota / chosen);
        let quotas = allocate_with_overrides(&selection, self.config.total_quota, min_per_engine, &self.config.quota_overrides)?;
        let targets = quotas
            .into_iter()
            .filter(|q| q.count > 0)
            .filter_map(|q| enabled.iter().find(|e| e.id == q.engine_id).map(|e| (e.clone(), q)))
            .collect::<Vec<_>>();
        if targets.is_empty() {
            return Err(ServiceError::NoEnginesAvailable("no engine received a quota".into()));
        }
        let plan = DispatchPlan::new(query.clone(), targets, self.config.deadline_ms)?;
        let lists = self.dispatcher.dispatch_all(&plan).await;

        let response = merge(&lists, query.mode, query.fusion, query.limit);
        self.stats.record(&observed_relevance(&lists, query.limit)).await?;
        let wall_ms = started.elapsed().as_secs_f64() * 1000.0;
        Ok(response.with_total_ms(wall_ms))
    }

    pub async fn run_metrics(&self, request: &MetricsRunRequest) -> Result<MetricsRunResponse, ServiceError> {
        let scenario = parse_scenario(&request.scenario.to_string(), request.seed)?;
        let mut config = ReportConfig::default();
        if let Some(k) = request.k {
            config.k = k;
        }
        if let Some(fusion) = request.fusion {
            config.fusion = fusion;
        }
        let report = run_table2_report(&scenario, &config).await?;
        Ok(MetricsRunResponse {
            table: report.table.clone(),
            report,
        })
    }
}

/// Each engine's share of the RRF top-`limit`; zero for failed engines.
pub fn observed_relevance(lists: &[RankedList], limit: usize) -> Vec<(RankedList, f64)> {
    let top: BTreeSet<String> = fuse_rrf(lists, DEFAULT_RRF_K)
        .into_iter()
        .take(limit)
        .map(|(url, _)| url)
        .collect();
    lists
        .iter()
        .map(|list| {
            let share = if !list.status.is_ok() || top.is_empty() {
                0.0
            } else {
                let mine: BTreeSet<&str> = list.canonical_urls().collect();
                mine.iter().filter(|u| top.contains(**u)).count() as f64 / top.len() as f64
            };
            (list.clone(), share)
        })
        .collect()
}
