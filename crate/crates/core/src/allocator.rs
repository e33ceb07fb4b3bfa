//! Document selection: how many results to request from each selected engine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selector::SelectionResult;

pub const DEFAULT_MIN_PER_ENGINE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub engine_id: String,
    pub count: usize,
}

/// Splits `total` across the selected engines in proportion to their
/// selection scores.
///
/// Engines whose proportional share falls below `min_per_engine` are pinned
/// at the floor and the rest of the budget is re-split among the others.
/// Fractional shares are rounded by largest remainder, ties going to the
/// lexicographically smaller engine id. All-zero scores split uniformly.
/// Output follows selection order.
pub fn allocate_quota(selection: &SelectionResult, total: usize, min_per_engine: usize) -> Result<Vec<Quota>> {
    let ids: Vec<&str> = selection.engine_ids().collect();
    let n = ids.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if total < min_per_engine * n {
        return Err(Error::BudgetTooSmall {
            total,
            min_per_engine,
            engines: n,
        });
    }

    let mut weights: Vec<f64> = selection
        .chosen
        .iter()
        .map(|c| if c.selection_score.is_finite() { c.selection_score.max(0.0) } else { 0.0 })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }

    let mut pinned = vec![false; n];
    let (budget, exact) = loop {
        let budget = total - min_per_engine * pinned.iter().filter(|&&p| p).count();
        let free_weight: f64 = (0..n).filter(|&i| !pinned[i]).map(|i| weights[i]).sum();
        let exact: Vec<f64> = (0..n)
            .map(|i| {
                if pinned[i] || free_weight == 0.0 {
                    0.0
                } else {
                    budget as f64 * weights[i] / free_weight
                }
            })
            .collect();
        let newly: Vec<usize> = (0..n)
            .filter(|&i| !pinned[i] && exact[i] < min_per_engine as f64)
            .collect();
        if newly.is_empty() || newly.len() == (0..n).filter(|&i| !pinned[i]).count() {
            break (budget, exact);
        }
        for i in newly {
            pinned[i] = true;
        }
    };

    let mut counts: Vec<usize> = (0..n)
        .map(|i| if pinned[i] { min_per_engine } else { exact[i].floor() as usize })
        .collect();
    let free_sum: usize = (0..n).filter(|&i| !pinned[i]).map(|i| counts[i]).sum();
    let mut leftover = budget.saturating_sub(free_sum);

    let mut order: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then_with(|| ids[a].cmp(ids[b]))
    });
    // one seat per engine normally suffices; the outer loop guards float drift
    while leftover > 0 {
        for &i in &order {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
        if order.is_empty() {
            break;
        }
    }

    Ok(ids
        .iter()
        .zip(counts)
        .map(|(id, count)| Quota {
            engine_id: id.to_string(),
            count,
        })
        .collect())
}

/// Like [`allocate_quota`], but engines listed in `overrides` receive exactly
/// the configured count and the remaining budget is split among the others.
pub fn allocate_with_overrides(
    selection: &SelectionResult,
    total: usize,
    min_per_engine: usize,
    overrides: &BTreeMap<String, usize>,
) -> Result<Vec<Quota>> {
    let overridden: BTreeSet<&str> = selection
        .engine_ids()
        .filter(|id| overrides.contains_key(*id))
        .collect();
    if overridden.is_empty() {
        return allocate_quota(selection, total, min_per_engine);
    }
    let fixed: usize = overridden.iter().map(|id| overrides[*id]).sum();
    let rest = SelectionResult {
        chosen: selection
            .chosen
            .iter()
            .filter(|c| !overridden.contains(c.engine_id.as_str()))
            .cloned()
            .collect(),
        approach: selection.approach,
    };
    let remaining = total.checked_sub(fixed).ok_or(Error::BudgetTooSmall {
        total,
        min_per_engine,
        engines: selection.chosen.len(),
    })?;
    let mut allocated = allocate_quota(&rest, remaining, min_per_engine)?.into_iter();
    Ok(selection
        .chosen
        .iter()
        .map(|c| match overrides.get(&c.engine_id) {
            Some(&count) => Quota {
                engine_id: c.engine_id.clone(),
                count,
            },
            None => allocated.next().expect("allocation covers every non-overridden engine"),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::{ScoredEngine, SelectionApproach};
    use proptest::prelude::*;

    fn selection(scores: &[(&str, f64)]) -> SelectionResult {
        SelectionResult {
            chosen: scores
                .iter()
                .map(|(id, s)| ScoredEngine {
                    engine_id: id.to_string(),
                    selection_score: *s,
                })
                .collect(),
            approach: SelectionApproach::Statistical,
        }
    }

    fn counts(q: &[Quota]) -> Vec<usize> {
        q.iter().map(|q| q.count).collect()
    }

    #[test]
    fn proportional_example() {
        let q = allocate_quota(&selection(&[("A", 0.5), ("B", 0.3), ("C", 0.2)]), 30, 2).unwrap();
        assert_eq!(counts(&q), vec![15, 9, 6]);
    }

    #[test]
    fn single_engine_gets_everything() {
        let q = allocate_quota(&selection(&[("A", 0.7)]), 10, 3).unwrap();
        assert_eq!(counts(&q), vec![10]);
    }

    #[test]
    fn zero_scores_split_uniformly_with_lexicographic_ties() {
        let q = allocate_quota(&selection(&[("A", 0.0), ("B", 0.0), ("C", 0.0)]), 10, 0).unwrap();
        assert_eq!(counts(&q), vec![4, 3, 3]);
        let q = allocate_quota(&selection(&[("C", 0.0), ("B", 0.0), ("A", 0.0)]), 10, 0).unwrap();
        assert_eq!(counts(&q), vec![3, 3, 4]);
    }

    #[test]
    fn floor_is_enforced() {
        let q = allocate_quota(&selection(&[("A", 0.98), ("B", 0.01), ("C", 0.01)]), 20, 3).unwrap();
        assert_eq!(counts(&q), vec![14, 3, 3]);
    }

    #[test]
    fn budget_too_small() {
        let err = allocate_quota(&selection(&[("A", 1.0), ("B", 1.0)]), 5, 3).unwrap_err();
        assert!(matches!(err, Error::BudgetTooSmall { total: 5, .. }));
    }

    #[test]
    fn overrides_take_fixed_counts() {
        let sel = selection(&[("A", 0.5), ("B", 0.5), ("C", 0.0)]);
        let overrides = BTreeMap::from([("C".to_string(), 7usize)]);
        let q = allocate_with_overrides(&sel, 27, 3, &overrides).unwrap();
        assert_eq!(counts(&q), vec![10, 10, 7]);
        let too_big = BTreeMap::from([("C".to_string(), 40usize)]);
        assert!(allocate_with_overrides(&sel, 27, 3, &too_big).is_err());
    }

    fn scores_and_budget() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..8).prop_flat_map(|scores| {
            let n = scores.len();
            (0usize..5).prop_flat_map(move |min| {
                let scores = scores.clone();
                (min * n..min * n + 100).prop_map(move |total| (scores.clone(), total, min))
            })
        })
    }

    fn named(scores: &[f64]) -> SelectionResult {
        let pairs: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, s)| (format!("E{i}"), *s)).collect();
        let refs: Vec<(&str, f64)> = pairs.iter().map(|(i, s)| (i.as_str(), *s)).collect();
        selection(&refs)
    }

    proptest! {
        #[test]
        fn conserves_budget_and_floor((scores, total, min) in scores_and_budget()) {
            let q = allocate_quota(&named(&scores), total, min).unwrap();
            prop_assert_eq!(q.iter().map(|q| q.count).sum::<usize>(), total);
            prop_assert!(q.iter().all(|q| q.count >= min));
        }

        #[test]
        fn raising_a_score_never_lowers_its_quota(
            (scores, total, min) in scores_and_budget(),
            idx in 0usize..8,
            bump in 0.001f64..1.0,
        ) {
            let idx = idx % scores.len();
            let before = allocate_quota(&named(&scores), total, min).unwrap();
            let mut raised = scores.clone();
            raised[idx] += bump;
            let after = allocate_quota(&named(&raised), total, min).unwrap();
            prop_assert!(after[idx].count >= before[idx].count,
                "before {:?} after {:?}", counts(&before), counts(&after));
        }
    }
}
