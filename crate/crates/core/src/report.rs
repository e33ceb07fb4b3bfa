//! Side-by-side comparison of single engines against the metasearch
//! pipeline over a served simulation scenario.
//!
//! "Traditional" numbers come from querying each engine on its own.
//! Metasearch numbers come from one parallel dispatch to all engines,
//! merged in both modes. Relevant response time is modelled as follows: a
//! user of single engines queries them one after another (scenario order)
//! until they have seen as many relevant documents as the unified top-k
//! holds, and pays the sum of those latencies. The metasearch user pays one
//! dispatch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::allocator::Quota;
use crate::dispatcher::{DispatchPlan, Dispatcher};
use crate::error::Result;
use crate::merger::{merge_grouped, merge_unified};
use crate::metrics::{coverage_union, overlap_pairwise, precision_at_k, redundancy, MetricsReport};
use crate::model::{EngineDescriptor, FusionMethod, RankedList};
use crate::simnet::{serve_sim_engines, SimNet, SimScenario, Topic};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k: usize,
    pub fusion: FusionMethod,
    pub timeout_ms: u64,
    pub deadline_ms: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            k: 10,
            fusion: FusionMethod::Rrf,
            timeout_ms: 2_000,
            deadline_ms: 2_000,
        }
    }
}

/// Measurements for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRow {
    pub topic: String,
    pub relevant: usize,
    pub engine_precision: BTreeMap<String, f64>,
    pub engine_coverage: BTreeMap<String, f64>,
    pub engine_latency_ms: BTreeMap<String, f64>,
    pub grouped_precision: f64,
    pub unified_precision: f64,
    pub union_coverage: Option<f64>,
    pub overlap: Option<f64>,
    pub metasearch_ms: f64,
    pub serial_relevant_ms: f64,
    pub grouped_redundancy: f64,
    pub unified_redundancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2Report {
    pub report: MetricsReport,
    pub per_query: Vec<QueryRow>,
    /// Slowest configured engine latency in the scenario.
    pub slowest_engine_ms: f64,
    pub largest_corpus: usize,
    pub engines: usize,
    #[serde(skip)]
    pub table: String,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn plan_for(topic_query: crate::model::Query, engines: &[EngineDescriptor], k: usize, deadline_ms: u64) -> Result<DispatchPlan> {
    let targets = engines
        .iter()
        .map(|e| {
            (
                e.clone(),
                Quota {
                    engine_id: e.id.clone(),
                    count: k,
                },
            )
        })
        .collect();
    DispatchPlan::new(topic_query, targets, deadline_ms)
}

fn url_list(list: &RankedList) -> Vec<String> {
    list.results.iter().map(|r| r.canonical_url.clone()).collect()
}

/// Runs the comparison for `topics` against engines already served by `net`.
pub async fn table2_report(scenario: &SimScenario, net: &SimNet, topics: &[Topic], config: &ReportConfig) -> Result<Table2Report> {
    let k = config.k.max(1);
    let dispatcher = Dispatcher::new();
    let engines = net.descriptors(Duration::from_millis(config.timeout_ms));
    let mut rows = Vec::with_capacity(topics.len());

    for topic in topics {
        let query = scenario.topic_query(topic)?;
        let relevant = scenario.relevant_urls(topic);

        let mut singles: Vec<RankedList> = Vec::with_capacity(engines.len());
        for engine in &engines {
            let plan = plan_for(query.clone(), std::slice::from_ref(engine), k, config.deadline_ms)?;
            singles.extend(dispatcher.dispatch_all(&plan).await);
        }

        let plan = plan_for(query.clone(), &engines, k, config.deadline_ms)?;
        let started = Instant::now();
        let lists = dispatcher.dispatch_all(&plan).await;
        let grouped = merge_grouped(&lists);
        let unified = merge_unified(&lists, config.fusion, k);
        let metasearch_ms = started.elapsed().as_secs_f64() * 1000.0;

        let grouped_urls: Vec<String> = grouped
            .groups
            .iter()
            .flatten()
            .flat_map(|g| g.results.iter().map(|r| r.canonical_url.clone()))
            .collect();
        let unified_urls: Vec<String> = unified
            .items
            .iter()
            .flatten()
            .map(|i| i.canonical_url.clone())
            .collect();

        let per_engine_sets: Vec<BTreeSet<String>> = singles.iter().map(|l| url_list(l).into_iter().collect()).collect();
        let engine_coverage: BTreeMap<String, f64> = if relevant.is_empty() {
            BTreeMap::new()
        } else {
            singles
                .iter()
                .zip(&per_engine_sets)
                .map(|(l, set)| Ok((l.engine_id.clone(), coverage_union(std::slice::from_ref(set), &relevant)?)))
                .collect::<Result<_>>()?
        };
        let meta_sets: Vec<BTreeSet<String>> = lists.iter().map(|l| url_list(l).into_iter().collect()).collect();
        let union_coverage = if relevant.is_empty() {
            None
        } else {
            Some(coverage_union(&meta_sets, &relevant)?)
        };

        let target = unified_urls.iter().filter(|u| relevant.contains(*u)).count();
        let mut serial_relevant_ms = 0.0;
        let mut found: BTreeSet<&String> = BTreeSet::new();
        for (list, set) in singles.iter().zip(&per_engine_sets) {
            serial_relevant_ms += list.latency_ms;
            found.extend(set.iter().filter(|u| relevant.contains(*u)));
            if found.len() >= target {
                break;
            }
        }

        rows.push(QueryRow {
            topic: topic.topic.clone(),
            relevant: relevant.len(),
            engine_precision: singles
                .iter()
                .map(|l| (l.engine_id.clone(), precision_at_k(&url_list(l), &relevant, k)))
                .collect(),
            engine_coverage,
            engine_latency_ms: singles.iter().map(|l| (l.engine_id.clone(), l.latency_ms)).collect(),
            grouped_precision: precision_at_k(&grouped_urls, &relevant, grouped_urls.len().max(1)),
            unified_precision: precision_at_k(&unified_urls, &relevant, k),
            union_coverage,
            overlap: overlap_pairwise(&lists, k).ok(),
            metasearch_ms,
            serial_relevant_ms,
            grouped_redundancy: redundancy(&grouped_urls),
            unified_redundancy: redundancy(&unified_urls),
        });
    }

    let mut report = MetricsReport {
        k,
        queries: rows.len(),
        ..MetricsReport::default()
    };
    for engine in &engines {
        let key = format!("engine:{}", engine.id);
        report
            .precision_at_k
            .insert(key.clone(), mean(rows.iter().filter_map(|r| r.engine_precision.get(&engine.id).copied())));
        report
            .response_time_ms
            .insert(key.clone(), mean(rows.iter().filter_map(|r| r.engine_latency_ms.get(&engine.id).copied())));
        let cov: Vec<f64> = rows.iter().filter_map(|r| r.engine_coverage.get(&engine.id).copied()).collect();
        if !cov.is_empty() {
            report.coverage.insert(key, mean(cov));
        }
    }
    report
        .precision_at_k
        .insert("meta:grouped".into(), mean(rows.iter().map(|r| r.grouped_precision)));
    report
        .precision_at_k
        .insert("meta:unified".into(), mean(rows.iter().map(|r| r.unified_precision)));
    let union: Vec<f64> = rows.iter().filter_map(|r| r.union_coverage).collect();
    if !union.is_empty() {
        report.coverage.insert("meta:union".into(), mean(union));
    }
    let overlaps: Vec<f64> = rows.iter().filter_map(|r| r.overlap).collect();
    report.mean_pairwise_overlap = (!overlaps.is_empty()).then(|| mean(overlaps));
    report
        .response_time_ms
        .insert("metasearch".into(), mean(rows.iter().map(|r| r.metasearch_ms)));
    report
        .relevant_response_time_ms
        .insert("traditional:serial".into(), mean(rows.iter().map(|r| r.serial_relevant_ms)));
    report
        .relevant_response_time_ms
        .insert("metasearch".into(), mean(rows.iter().map(|r| r.metasearch_ms)));
    report
        .redundancy
        .insert("meta:grouped".into(), mean(rows.iter().map(|r| r.grouped_redundancy)));
    report
        .redundancy
        .insert("meta:unified".into(), mean(rows.iter().map(|r| r.unified_redundancy)));

    let mut out = Table2Report {
        report,
        per_query: rows,
        slowest_engine_ms: scenario.engines.iter().map(|e| e.latency_ms).fold(0.0, f64::max),
        largest_corpus: scenario.engines.iter().map(|e| e.corpus.len()).max().unwrap_or(0),
        engines: scenario.engines.len(),
        table: String::new(),
    };
    out.table = render_table(&out);
    Ok(out)
}

/// Serves the scenario on loopback, runs every topic, and shuts down.
pub async fn run_table2_report(scenario: &SimScenario, config: &ReportConfig) -> Result<Table2Report> {
    let net = serve_sim_engines(scenario).await?;
    table2_report(scenario, &net, &scenario.topics, config).await
}

fn best_engine(map: &BTreeMap<String, f64>) -> Option<(&str, f64)> {
    map.iter()
        .filter_map(|(k, v)| k.strip_prefix("engine:").map(|id| (id, *v)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)))
}

/// Plain-text table using the row labels of the classic search engine vs.
/// metasearch engine comparison.
pub fn render_table(report: &Table2Report) -> String {
    let r = &report.report;
    let k = r.k;
    let na = "not measured".to_string();
    let best_precision = best_engine(&r.precision_at_k);
    let best_coverage = best_engine(&r.coverage);
    let engine_times: Vec<f64> = r
        .response_time_ms
        .iter()
        .filter(|(key, _)| key.starts_with("engine:"))
        .map(|(_, v)| *v)
        .collect();
    let meta_ms = r.response_time_ms.get("metasearch").copied().unwrap_or(0.0);
    let slowest_measured = engine_times.iter().copied().fold(0.0, f64::max);
    let get = |m: &BTreeMap<String, f64>, key: &str| m.get(key).copied().unwrap_or(0.0);

    let rows: Vec<(String, String, String)> = vec![
        (
            "Database".into(),
            format!("physical index, up to {} docs per engine", report.largest_corpus),
            "virtual, 0 docs stored".into(),
        ),
        (
            "Coverage".into(),
            best_coverage.map_or(na.clone(), |(id, v)| format!("{v:.2} (best engine {id})")),
            r.coverage.get("meta:union").map_or(na.clone(), |v| format!("{v:.2} (union of {} engines)", report.engines)),
        ),
        (
            format!("Precision@{k}"),
            best_precision.map_or(na.clone(), |(id, v)| format!("{v:.2} (best engine {id})")),
            format!(
                "{:.2} unified, {:.2} grouped",
                get(&r.precision_at_k, "meta:unified"),
                get(&r.precision_at_k, "meta:grouped")
            ),
        ),
        (
            "Response Time".into(),
            format!("{:.1} ms mean, {:.1} ms slowest", mean(engine_times.iter().copied()), slowest_measured),
            format!(
                "{meta_ms:.1} ms ({:.2}x slowest engine)",
                if slowest_measured > 0.0 { meta_ms / slowest_measured } else { 0.0 }
            ),
        ),
        (
            "Relevant result time".into(),
            format!("{:.1} ms (serial queries)", get(&r.relevant_response_time_ms, "traditional:serial")),
            format!("{:.1} ms (one dispatch)", get(&r.relevant_response_time_ms, "metasearch")),
        ),
        ("Network Bandwidth".into(), na.clone(), na.clone()),
        (
            "Dependency".into(),
            "own ranking and index".into(),
            format!("{} component engines", report.engines),
        ),
        (
            "Redundancy".into(),
            format!("{:.2} duplicate share (grouped)", get(&r.redundancy, "meta:grouped")),
            format!("{:.2} duplicate share (unified)", get(&r.redundancy, "meta:unified")),
        ),
        (
            format!("Overlap@{k}"),
            r.mean_pairwise_overlap.map_or("n/a".into(), |o| format!("{o:.2}")),
            "-".into(),
        ),
        ("Hardware Requirement".into(), na.clone(), na.clone()),
        ("Implementation cost".into(), na.clone(), na),
    ];

    let header = (
        "Parameter".to_string(),
        "Traditional Search Engine".to_string(),
        "Metasearch Engine".to_string(),
    );
    let w0 = rows.iter().map(|r| r.0.len()).chain([header.0.len()]).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).chain([header.1.len()]).max().unwrap_or(0);
    let w2 = rows.iter().map(|r| r.2.len()).chain([header.2.len()]).max().unwrap_or(0);

    let mut out = String::new();
    let mut line = |a: &str, b: &str, c: &str| {
        let _ = writeln!(out, "{a:<w0$} | {b:<w1$} | {c:<w2$}");
    };
    line(&header.0, &header.1, &header.2);
    line(&"-".repeat(w0), &"-".repeat(w1), &"-".repeat(w2));
    for (a, b, c) in &rows {
        line(a, b, c);
    }
    let _ = writeln!(
        out,
        "\n{} queries, k = {}. Network bandwidth, hardware and implementation cost are not measurable in software.",
        r.queries, k
    );
    out
}
