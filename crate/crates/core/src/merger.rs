//! Result merging.
//!
//! Grouped mode returns each engine's list as-is. Unified mode fuses the
//! lists into one deduplicated ranking using only rank positions; native
//! engine scores are never read. Documents are identified by canonical URL,
//! and a repeated URL inside one engine's list only counts at its best rank.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::model::{Contribution, FusionMethod, MergeMode, MergedItem, MergedResponse, RankedList, SearchResult};

pub const DEFAULT_RRF_K: f64 = 60.0;

// RRF sums of distinct rank multisets differ by far more than this.
const SCORE_EPSILON: f64 = 1e-12;

pub fn merge_grouped(lists: &[RankedList]) -> MergedResponse {
    let (per_engine_latency_ms, total_ms, errors) = MergedResponse::bookkeeping(lists);
    MergedResponse {
        mode: MergeMode::Grouped,
        groups: Some(lists.to_vec()),
        items: None,
        per_engine_latency_ms,
        total_ms,
        errors,
    }
}

/// First occurrence of each canonical URL within one list.
fn distinct_results(list: &RankedList) -> impl Iterator<Item = &SearchResult> {
    let mut seen = HashSet::new();
    list.results
        .iter()
        .filter(move |r| seen.insert(r.canonical_url.as_str()))
}

/// Interleaves rank 1 of every list, then rank 2, and so on, skipping URLs
/// already emitted.
pub fn fuse_round_robin(lists: &[RankedList]) -> Vec<String> {
    let longest = lists.iter().map(|l| l.results.len()).max().unwrap_or(0);
    let mut emitted = HashSet::new();
    let mut out = Vec::new();
    for depth in 0..longest {
        for list in lists {
            if let Some(result) = list.results.get(depth) {
                if emitted.insert(result.canonical_url.as_str()) {
                    out.push(result.canonical_url.clone());
                }
            }
        }
    }
    out
}

struct Tally {
    score: f64,
    best_rank: u32,
}

fn sort_tallies(tallies: HashMap<&str, Tally>) -> Vec<(String, f64)> {
    let mut scored: Vec<(&str, Tally)> = tallies.into_iter().collect();
    scored.sort_by(|(url_a, a), (url_b, b)| {
        let by_score = if (a.score - b.score).abs() <= SCORE_EPSILON * a.score.abs().max(b.score.abs()).max(1.0) {
            Ordering::Equal
        } else {
            b.score.total_cmp(&a.score)
        };
        by_score
            .then_with(|| a.best_rank.cmp(&b.best_rank))
            .then_with(|| url_a.cmp(url_b))
    });
    scored.into_iter().map(|(url, t)| (url.to_string(), t.score)).collect()
}

fn tally<F>(lists: &[RankedList], points: F) -> HashMap<&str, Tally>
where
    F: Fn(u32) -> f64,
{
    let mut ranks: HashMap<&str, Vec<u32>> = HashMap::new();
    for list in lists {
        for result in distinct_results(list) {
            ranks.entry(result.canonical_url.as_str()).or_default().push(result.rank);
        }
    }
    ranks
        .into_iter()
        .map(|(url, mut rs)| {
            // ascending rank order: equal rank multisets give bit-identical sums
            rs.sort_unstable();
            let tally = Tally {
                score: rs.iter().map(|&r| points(r)).sum(),
                best_rank: rs[0],
            };
            (url, tally)
        })
        .collect()
}

/// Borda count: with `L` the longest input list, rank `r` earns `L - r + 1`.
pub fn fuse_borda(lists: &[RankedList]) -> Vec<(String, f64)> {
    let longest = lists.iter().map(|l| l.results.len()).max().unwrap_or(0) as f64;
    sort_tallies(tally(lists, |rank| longest - rank as f64 + 1.0))
}

/// Reciprocal rank fusion: `score(d) = sum 1 / (k + rank)`.
pub fn fuse_rrf(lists: &[RankedList], k: f64) -> Vec<(String, f64)> {
    sort_tallies(tally(lists, |rank| 1.0 / (k + rank as f64)))
}

/// Runs `fusion` and builds the unified response, truncated to `limit` items.
///
/// Each item's title and snippet come from its best-ranked contribution,
/// ties going to the lexicographically smaller engine id. Round-robin has no
/// native score, so its items carry `1 / position`.
pub fn merge_unified(lists: &[RankedList], fusion: FusionMethod, limit: usize) -> MergedResponse {
    let ordered: Vec<(String, f64)> = match fusion {
        FusionMethod::RoundRobin => fuse_round_robin(lists)
            .into_iter()
            .enumerate()
            .map(|(i, url)| (url, 1.0 / (i as f64 + 1.0)))
            .collect(),
        FusionMethod::Borda => fuse_borda(lists),
        FusionMethod::Rrf => fuse_rrf(lists, DEFAULT_RRF_K),
    };

    let mut sources: HashMap<&str, Vec<&SearchResult>> = HashMap::new();
    for list in lists {
        for result in distinct_results(list) {
            sources.entry(result.canonical_url.as_str()).or_default().push(result);
        }
    }

    let items = ordered
        .into_iter()
        .take(limit)
        .enumerate()
        .map(|(i, (url, fused_score))| {
            let contributors = &sources[url.as_str()];
            let best = contributors
                .iter()
                .min_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.engine_id.cmp(&b.engine_id)))
                .expect("every fused url has a source");
            MergedItem {
                title: best.title.clone(),
                snippet: best.snippet.clone(),
                canonical_url: url,
                fused_score,
                contributions: contributors
                    .iter()
                    .map(|r| Contribution {
                        engine_id: r.engine_id.clone(),
                        rank: r.rank,
                    })
                    .collect(),
                final_rank: i as u32 + 1,
            }
        })
        .collect();

    let (per_engine_latency_ms, total_ms, errors) = MergedResponse::bookkeeping(lists);
    MergedResponse {
        mode: MergeMode::Unified,
        groups: None,
        items: Some(items),
        per_engine_latency_ms,
        total_ms,
        errors,
    }
}

/// Merges in whichever mode the query asks for.
pub fn merge(lists: &[RankedList], mode: MergeMode, fusion: FusionMethod, limit: usize) -> MergedResponse {
    match mode {
        MergeMode::Grouped => merge_grouped(lists),
        MergeMode::Unified => merge_unified(lists, fusion, limit),
    }
}
