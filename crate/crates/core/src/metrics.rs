//! Retrieval quality measures used to compare single engines against the
//! metasearch pipeline.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RankedList;

/// Relevant documents among the first `k` retrieved, divided by
/// `min(k, |retrieved|)`. Zero when nothing was retrieved or `k` is zero.
pub fn precision_at_k<S: AsRef<str>>(retrieved: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let depth = k.min(retrieved.len());
    if depth == 0 {
        return 0.0;
    }
    let hits = retrieved[..depth]
        .iter()
        .filter(|u| relevant.contains(u.as_ref()))
        .count();
    hits as f64 / depth as f64
}

/// Fraction of the relevant set found by at least one engine.
pub fn coverage_union(per_engine_retrieved: &[BTreeSet<String>], relevant: &BTreeSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let found = relevant
        .iter()
        .filter(|u| per_engine_retrieved.iter().any(|set| set.contains(*u)))
        .count();
    Ok(found as f64 / relevant.len() as f64)
}

fn top_k_set(list: &RankedList, k: usize) -> HashSet<&str> {
    list.results.iter().take(k).map(|r| r.canonical_url.as_str()).collect()
}

/// Mean over unordered engine pairs of `|top-k(A) ∩ top-k(B)| / k`.
pub fn overlap_pairwise(lists: &[RankedList], k: usize) -> Result<f64> {
    if lists.len() < 2 {
        return Err(Error::TooFewLists(lists.len()));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let tops: Vec<HashSet<&str>> = lists.iter().map(|l| top_k_set(l, k)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..tops.len() {
        for j in i + 1..tops.len() {
            total += tops[i].intersection(&tops[j]).count() as f64 / k as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Fraction of entries that repeat an earlier canonical URL.
pub fn redundancy<S: AsRef<str>>(entries: &[S]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&str> = entries.iter().map(|e| e.as_ref()).collect();
    1.0 - distinct.len() as f64 / entries.len() as f64
}

/// Aggregate comparison numbers for one evaluation run. Map keys name the
/// configuration: `engine:<id>` for a single engine queried alone,
/// `meta:grouped` / `meta:unified` / `meta:union` for the metasearch side.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision_at_k: BTreeMap<String, f64>,
    pub coverage: BTreeMap<String, f64>,
    /// Absent when fewer than two engines took part.
    pub mean_pairwise_overlap: Option<f64>,
    pub response_time_ms: BTreeMap<String, f64>,
    pub relevant_response_time_ms: BTreeMap<String, f64>,
    #[serde(default)]
    pub redundancy: BTreeMap<String, f64>,
    pub k: usize,
    pub queries: usize,
}

impl MetricsReport {
    pub fn is_well_formed(&self) -> bool {
        let ratio = |m: &BTreeMap<String, f64>| m.values().all(|v| (0.0..=1.0).contains(v));
        let time = |m: &BTreeMap<String, f64>| m.values().all(|v| *v >= 0.0);
        ratio(&self.precision_at_k)
            && ratio(&self.coverage)
            && ratio(&self.redundancy)
            && self.mean_pairwise_overlap.is_none_or(|o| (0.0..=1.0).contains(&o))
            && time(&self.response_time_ms)
            && time(&self.relevant_response_time_ms)
    }
}
