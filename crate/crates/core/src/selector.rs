//! Database selection: which registered engines receive a query.
//!
//! Three interchangeable approaches are provided, each scoring engines from
//! an [`EngineRepresentative`]:
//!
//! * rough: fraction of query terms found in the engine's keyword set
//! * statistical: sum over query terms of `df(t) / corpus_size`
//! * learned: an exponential moving average of observed relevance
//!
//! Engines scoring above zero are ranked by score (ties by engine id) and
//! truncated to `max_engines`. When nobody scores, every supplied engine is
//! returned with score zero.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{tokenize, Query};

/// Smoothing factor for [`update_learned`].
pub const LEARNING_RATE: f64 = 0.2;
/// Keywords kept by [`build_representative_from_sample`].
pub const REPRESENTATIVE_KEYWORDS: usize = 20;
pub const INITIAL_LEARNED_SCORE: f64 = 0.5;
// Scores closer than this (relative) are treated as tied.
const SCORE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRepresentative {
    pub engine_id: String,
    #[serde(default)]
    pub keywords: BTreeSet<String>,
    #[serde(default)]
    pub term_df: BTreeMap<String, u64>,
    #[serde(default)]
    pub corpus_size: u64,
    #[serde(default = "initial_learned")]
    pub learned_score: f64,
}

fn initial_learned() -> f64 {
    INITIAL_LEARNED_SCORE
}

impl EngineRepresentative {
    /// A representative with no evidence yet.
    pub fn empty(engine_id: &str) -> Self {
        EngineRepresentative {
            engine_id: engine_id.to_string(),
            keywords: BTreeSet::new(),
            term_df: BTreeMap::new(),
            corpus_size: 0,
            learned_score: INITIAL_LEARNED_SCORE,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.term_df.values().all(|&df| df <= self.corpus_size)
            && (0.0..=1.0).contains(&self.learned_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionApproach {
    Rough,
    #[default]
    Statistical,
    Learned,
    UserFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEngine {
    pub engine_id: String,
    pub selection_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Vec<ScoredEngine>,
    pub approach: SelectionApproach,
}

impl SelectionResult {
    pub fn engine_ids(&self) -> impl Iterator<Item = &str> {
        self.chosen.iter().map(|c| c.engine_id.as_str())
    }
}

pub fn select_rough(query: &Query, reps: &[EngineRepresentative], max_engines: usize) -> Result<SelectionResult> {
    let terms: Vec<&String> = query.terms.iter().collect();
    rank_by(reps, max_engines, SelectionApproach::Rough, |rep| {
        if terms.is_empty() {
            return 0.0;
        }
        let hits = terms.iter().filter(|t| rep.keywords.contains(t.as_str())).count();
        hits as f64 / terms.len() as f64
    })
}

pub fn select_statistical(
    query: &Query,
    reps: &[EngineRepresentative],
    max_engines: usize,
) -> Result<SelectionResult> {
    rank_by(reps, max_engines, SelectionApproach::Statistical, |rep| {
        statistical_score(&query.terms, rep)
    })
}

/// Normalized document-frequency sum; an empty corpus scores zero.
pub fn statistical_score(terms: &[String], rep: &EngineRepresentative) -> f64 {
    if rep.corpus_size == 0 {
        return 0.0;
    }
    let size = rep.corpus_size as f64;
    terms
        .iter()
        .map(|t| rep.term_df.get(t).copied().unwrap_or(0) as f64 / size)
        .sum()
}

pub fn select_learned(_query: &Query, reps: &[EngineRepresentative], max_engines: usize) -> Result<SelectionResult> {
    rank_by(reps, max_engines, SelectionApproach::Learned, |rep| rep.learned_score)
}

/// Bypasses scoring: exactly the pinned engines, in the order given, with
/// repeated ids collapsed.
pub fn select_user_fixed<S: AsRef<str>>(pinned: &[S]) -> Result<SelectionResult> {
    let mut seen = HashSet::new();
    let chosen: Vec<ScoredEngine> = pinned
        .iter()
        .map(|id| id.as_ref())
        .filter(|id| seen.insert(id.to_string()))
        .map(|id| ScoredEngine {
            engine_id: id.to_string(),
            selection_score: 1.0,
        })
        .collect();
    if chosen.is_empty() {
        return Err(Error::NoEnginesRegistered);
    }
    Ok(SelectionResult {
        chosen,
        approach: SelectionApproach::UserFixed,
    })
}

/// Dispatches to the configured approach. `UserFixed` without a pinned list
/// selects every supplied engine.
pub fn select(
    approach: SelectionApproach,
    query: &Query,
    reps: &[EngineRepresentative],
    max_engines: usize,
) -> Result<SelectionResult> {
    match approach {
        SelectionApproach::Rough => select_rough(query, reps, max_engines),
        SelectionApproach::Statistical => select_statistical(query, reps, max_engines),
        SelectionApproach::Learned => select_learned(query, reps, max_engines),
        SelectionApproach::UserFixed => {
            let ids: Vec<&str> = reps.iter().map(|r| r.engine_id.as_str()).collect();
            select_user_fixed(&ids)
        }
    }
}

fn rank_by<F>(
    reps: &[EngineRepresentative],
    max_engines: usize,
    approach: SelectionApproach,
    score: F,
) -> Result<SelectionResult>
where
    F: Fn(&EngineRepresentative) -> f64,
{
    if reps.is_empty() {
        return Err(Error::NoEnginesRegistered);
    }
    let mut best: HashMap<&str, f64> = HashMap::new();
    for rep in reps {
        let s = score(rep);
        let entry = best.entry(rep.engine_id.as_str()).or_insert(s);
        *entry = entry.max(s);
    }
    let mut scored: Vec<ScoredEngine> = best
        .into_iter()
        .map(|(id, s)| ScoredEngine {
            engine_id: id.to_string(),
            selection_score: s,
        })
        .collect();
    scored.sort_by(|a, b| {
        let (x, y) = (a.selection_score, b.selection_score);
        let by_score = if (x - y).abs() <= SCORE_EPSILON * x.abs().max(y.abs()).max(1.0) {
            std::cmp::Ordering::Equal
        } else {
            y.total_cmp(&x)
        };
        by_score.then_with(|| a.engine_id.cmp(&b.engine_id))
    });

    let positive: Vec<ScoredEngine> = scored
        .iter()
        .filter(|s| s.selection_score > 0.0)
        .take(max_engines.max(1))
        .cloned()
        .collect();

    let chosen = if positive.is_empty() {
        // nothing matched: fall back to every engine
        scored
            .into_iter()
            .map(|s| ScoredEngine {
                selection_score: 0.0,
                ..s
            })
            .collect()
    } else {
        positive
    };
    Ok(SelectionResult { chosen, approach })
}

pub fn update_learned(rep: &EngineRepresentative, observed_relevance: f64) -> Result<EngineRepresentative> {
    if !(0.0..=1.0).contains(&observed_relevance) {
        return Err(Error::OutOfRangeRelevance(observed_relevance));
    }
    let next = (1.0 - LEARNING_RATE) * rep.learned_score + LEARNING_RATE * observed_relevance;
    Ok(EngineRepresentative {
        learned_score: next.clamp(0.0, 1.0),
        ..rep.clone()
    })
}

/// A sampled document: `(url, title, body)`.
pub type SampledDoc = (String, String, String);

pub fn build_representative_from_sample(engine_id: &str, sampled_docs: &[SampledDoc]) -> Result<EngineRepresentative> {
    if sampled_docs.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut term_df: BTreeMap<String, u64> = BTreeMap::new();
    for (_url, title, body) in sampled_docs {
        let distinct: BTreeSet<String> = tokenize(title).into_iter().chain(tokenize(body)).collect();
        for term in distinct {
            *term_df.entry(term).or_insert(0) += 1;
        }
    }
    let mut by_df: Vec<(&String, &u64)> = term_df.iter().collect();
    by_df.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let keywords = by_df
        .into_iter()
        .take(REPRESENTATIVE_KEYWORDS)
        .map(|(t, _)| t.clone())
        .collect();

    Ok(EngineRepresentative {
        engine_id: engine_id.to_string(),
        keywords,
        term_df,
        corpus_size: sampled_docs.len() as u64,
        learned_score: INITIAL_LEARNED_SCORE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rep(id: &str, keywords: &[&str]) -> EngineRepresentative {
        EngineRepresentative {
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            ..EngineRepresentative::empty(id)
        }
    }

    fn stat_rep(id: &str, df: &[(&str, u64)], size: u64) -> EngineRepresentative {
        EngineRepresentative {
            term_df: df.iter().map(|(t, n)| (t.to_string(), *n)).collect(),
            corpus_size: size,
            ..EngineRepresentative::empty(id)
        }
    }

    fn learned(id: &str, score: f64) -> EngineRepresentative {
        EngineRepresentative {
            learned_score: score,
            ..EngineRepresentative::empty(id)
        }
    }

    fn ids(sel: &SelectionResult) -> Vec<&str> {
        sel.engine_ids().collect()
    }

    #[test]
    fn rough_partial_overlap() {
        let q = Query::parse("rust compiler").unwrap();
        let reps = [rep("A", &["rust", "systems"]), rep("B", &["cooking"])];
        let sel = select_rough(&q, &reps, 5).unwrap();
        assert_eq!(ids(&sel), vec!["A"]);
        assert_eq!(sel.chosen[0].selection_score, 0.5);
    }

    #[test]
    fn rough_full_overlap_ranks_first() {
        let q = Query::parse("rust compiler").unwrap();
        let reps = [rep("A", &["rust"]), rep("B", &["rust", "compiler", "llvm"])];
        let sel = select_rough(&q, &reps, 5).unwrap();
        assert_eq!(ids(&sel), vec!["B", "A"]);
        assert_eq!(sel.chosen[0].selection_score, 1.0);
    }

    #[test]
    fn rough_fallback_returns_all() {
        let q = Query::parse("quantum").unwrap();
        let reps = [rep("B", &["cooking"]), rep("A", &["rust"]), rep("C", &[])];
        let sel = select_rough(&q, &reps, 1).unwrap();
        assert_eq!(ids(&sel), vec!["A", "B", "C"]);
        assert!(sel.chosen.iter().all(|c| c.selection_score == 0.0));
    }

    #[test]
    fn no_engines_is_an_error() {
        let q = Query::parse("x").unwrap();
        assert_eq!(select_rough(&q, &[], 3), Err(Error::NoEnginesRegistered));
        assert_eq!(select_learned(&q, &[], 3), Err(Error::NoEnginesRegistered));
    }

    #[test]
    fn statistical_example() {
        let q = Query::parse("rust").unwrap();
        let reps = [stat_rep("B", &[("rust", 0)], 1000), stat_rep("A", &[("rust", 100)], 1000)];
        let sel = select_statistical(&q, &reps, 5).unwrap();
        assert_eq!(ids(&sel), vec!["A"]);
        assert!((sel.chosen[0].selection_score - 0.1).abs() < 1e-12);
    }

    #[test]
    fn statistical_ties_break_by_id() {
        let q = Query::parse("rust").unwrap();
        let reps = [stat_rep("Z", &[("rust", 5)], 10), stat_rep("M", &[("rust", 5)], 10)];
        assert_eq!(ids(&select_statistical(&q, &reps, 5).unwrap()), vec!["M", "Z"]);
    }

    #[test]
    fn statistical_fallback() {
        let q = Query::parse("absent").unwrap();
        let reps = [stat_rep("A", &[("rust", 5)], 10), stat_rep("B", &[], 10)];
        let sel = select_statistical(&q, &reps, 1).unwrap();
        assert_eq!(ids(&sel), vec!["A", "B"]);
    }

    #[test]
    fn learned_orders_by_score() {
        let q = Query::parse("x").unwrap();
        let sel = select_learned(&q, &[learned("B", 0.2), learned("A", 0.9)], 5).unwrap();
        assert_eq!(ids(&sel), vec!["A", "B"]);
        let sel = select_learned(&q, &[learned("C", 0.4), learned("A", 0.4), learned("B", 0.4)], 5).unwrap();
        assert_eq!(ids(&sel), vec!["A", "B", "C"]);
    }

    #[test]
    fn learned_max_one_matches_exhaustive_max() {
        let q = Query::parse("x").unwrap();
        let reps = [learned("A", 0.3), learned("B", 0.8), learned("C", 0.5)];
        let best = reps
            .iter()
            .max_by(|a, b| a.learned_score.total_cmp(&b.learned_score))
            .unwrap();
        let sel = select_learned(&q, &reps, 1).unwrap();
        assert_eq!(ids(&sel), vec![best.engine_id.as_str()]);
    }

    #[test]
    fn user_fixed_returns_exact_list() {
        let sel = select_user_fixed(&["E2", "E1", "E2"]).unwrap();
        assert_eq!(ids(&sel), vec!["E2", "E1"]);
        assert_eq!(sel.approach, SelectionApproach::UserFixed);
        assert!(select_user_fixed::<&str>(&[]).is_err());
    }

    #[test]
    fn learned_update_examples() {
        let r = learned("A", 0.5);
        assert_eq!(update_learned(&r, 0.5).unwrap().learned_score, 0.5);
        let r = learned("A", 0.0);
        assert!((update_learned(&r, 1.0).unwrap().learned_score - 0.2).abs() < 1e-12);
        assert_eq!(update_learned(&r, 1.3), Err(Error::OutOfRangeRelevance(1.3)));
        assert!(update_learned(&r, -0.1).is_err());
    }

    #[test]
    fn representative_counts_documents() {
        let docs = vec![
            ("u1".into(), "web search".into(), "the web".into()),
            ("u2".into(), "Web".into(), "engines".into()),
        ];
        let rep = build_representative_from_sample("E", &docs).unwrap();
        assert_eq!(rep.term_df["web"], 2);
        assert_eq!(rep.term_df["engines"], 1);
        assert_eq!(rep.corpus_size, 2);
        assert_eq!(rep.learned_score, 0.5);
        assert!(rep.keywords.contains("web"));

        let single = build_representative_from_sample("E", &docs[..1]).unwrap();
        assert!(single.term_df.values().all(|&df| df == 1));

        assert_eq!(build_representative_from_sample("E", &[]), Err(Error::EmptySample));
    }

    #[test]
    fn keywords_are_top_twenty_by_df() {
        let docs: Vec<SampledDoc> = (0..30)
            .map(|i| {
                let body: Vec<String> = (0..=i).map(|j| format!("t{j:02}")).collect();
                (format!("u{i}"), String::new(), body.join(" "))
            })
            .collect();
        let rep = build_representative_from_sample("E", &docs).unwrap();
        // t00 appears in all 30 docs, t29 only in one
        let expected: BTreeSet<String> = (0..20).map(|j| format!("t{j:02}")).collect();
        assert_eq!(rep.keywords, expected);
    }

    proptest! {
        #[test]
        fn representative_df_bounded(seed_words in prop::collection::vec(prop::collection::vec(0u8..30, 1..15), 100)) {
            let docs: Vec<SampledDoc> = seed_words
                .iter()
                .enumerate()
                .map(|(i, ws)| {
                    let body: Vec<String> = ws.iter().map(|w| format!("w{w}")).collect();
                    (format!("u{i}"), String::new(), body.join(" "))
                })
                .collect();
            let rep = build_representative_from_sample("E", &docs).unwrap();
            prop_assert!(rep.is_consistent());
            for (term, df) in &rep.term_df {
                let direct = docs.iter().filter(|(_, _, b)| b.split(' ').any(|w| w == term)).count() as u64;
                prop_assert_eq!(*df, direct);
            }
        }

        #[test]
        fn learned_score_stays_in_unit_interval(start in 0.0f64..=1.0, obs in prop::collection::vec(0.0f64..=1.0, 0..50)) {
            let mut r = learned("A", start);
            for o in obs {
                r = update_learned(&r, o).unwrap();
                prop_assert!((0.0..=1.0).contains(&r.learned_score));
            }
        }

        #[test]
        fn statistical_df_increase_never_demotes(
            dfs in prop::collection::vec((0u64..50, 0u64..50), 2..6),
            target in 0usize..6,
            bump in 1u64..50,
        ) {
            let q = Query::parse("alpha beta").unwrap();
            let mut reps: Vec<EngineRepresentative> = dfs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| stat_rep(&format!("E{i}"), &[("alpha", *a), ("beta", *b)], 100))
                .collect();
            let target = target % reps.len();
            let id = reps[target].engine_id.clone();
            let pos = |sel: &SelectionResult| sel.engine_ids().position(|e| e == id);
            let before = select_statistical(&q, &reps, reps.len()).unwrap();
            let df = reps[target].term_df.get_mut("alpha").unwrap();
            *df = (*df + bump).min(100);
            let after = select_statistical(&q, &reps, reps.len()).unwrap();
            match (pos(&before), pos(&after)) {
                (Some(b), Some(a)) => prop_assert!(a <= b || before.chosen[b].selection_score == 0.0),
                (Some(_), None) => prop_assert!(false, "engine dropped after df increase"),
                _ => {}
            }
            // recompute scores independently
            for c in &after.chosen {
                let r = reps.iter().find(|r| r.engine_id == c.engine_id).unwrap();
                let direct = (r.term_df["alpha"] + r.term_df["beta"]) as f64 / 100.0;
                prop_assert!((c.selection_score - direct).abs() < 1e-12 || c.selection_score == 0.0);
            }
        }

        #[test]
        fn selections_respect_bounds(scores in prop::collection::vec(0.0f64..1.0, 1..8), max in 1usize..8) {
            let q = Query::parse("x").unwrap();
            let reps: Vec<_> = scores.iter().enumerate().map(|(i, s)| learned(&format!("E{i}"), *s)).collect();
            let sel = select_learned(&q, &reps, max).unwrap();
            let all_zero = sel.chosen.iter().all(|c| c.selection_score == 0.0);
            prop_assert!(sel.chosen.len() <= max || all_zero);
            prop_assert!(sel.chosen.windows(2).all(|w| w[0].selection_score >= w[1].selection_score));
            let distinct: HashSet<_> = sel.engine_ids().collect();
            prop_assert_eq!(distinct.len(), sel.chosen.len());
            prop_assert!(sel.engine_ids().all(|id| reps.iter().any(|r| r.engine_id == id)));
        }
    }
}
