mod common;

use std::collections::BTreeSet;

use cfrules::divergent::{candidate_features, SearchConfig};
use cfrules::rules::candidate_leaves;
use cfrules::{
    merge_rectangles, projected_weights, CounterfactualRule, Estimator, Hyperrectangle, Interval, RuleScope, Strategy,
    TargetSet,
};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn green_region() -> Hyperrectangle<f64> {
    Hyperrectangle::from_intervals([(1, Interval::new(2.0f64.next_up(), 6.0).unwrap())])
}

fn query_leaf() -> Hyperrectangle<f64> {
    let forest = toy_partition();
    let tree = &forest.trees()[0];
    tree.leaf(tree.leaf_index(&TOY_X)).region.clone()
}

#[test]
fn toy_partition_minimal_divergent_set_is_the_second_feature() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let cfg = SearchConfig {
        pi: 0.35,
        ..SearchConfig::default()
    };
    let found = est.minimal_divergent(&TOY_X, &cfg).unwrap();
    assert_eq!(found.explanations.len(), 1);
    assert_eq!(found.explanations[0].features, vec![1]);
    assert!((found.explanations[0].cdp - 10.0 / 27.0).abs() < 1e-15);
    assert!(found.explanations[0].minimal);
}

#[test]
fn unreachable_threshold_reports_best_subset() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let found = est.minimal_divergent(&TOY_X, &SearchConfig::default()).unwrap();
    assert!(!found.found());
    let best = found.best.unwrap();
    assert_eq!(best.features, vec![1]);
    assert!((best.cdp - 10.0 / 27.0).abs() < 1e-15);
    assert_eq!(found.evaluated, 4);
}

#[test]
fn toy_partition_candidates_include_the_green_leaves() {
    let forest = toy_partition();
    let support: BTreeSet<usize> = projected_weights(&forest, &[0], &TOY_X).as_map().keys().copied().collect();
    assert_eq!(support.len(), 27);
    let candidates = candidate_leaves(&forest, &support, &[1]);
    assert_eq!(candidates.len(), 4);
    for (lo, hi) in [(2.0, 4.0), (4.0, 6.0)] {
        let iv = Interval::new(f64::next_up(lo), hi).unwrap();
        assert!(candidates.contains(&Hyperrectangle::from_intervals([(1, iv)])));
    }
}

#[test]
fn toy_partition_local_rule_is_the_green_region() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let rule = est.build_local_rule(&TOY_X, &[1], 0.9).unwrap();
    assert!(!rule.degenerate);
    assert_eq!(rule.rectangles.len(), 1);
    let r = &rule.rectangles[0];
    assert_eq!(r.rect, green_region());
    assert_eq!(r.crp, 1.0);
    assert!((r.plausibility - 10.0 / 27.0).abs() < 1e-15);
    assert_eq!(rule.diagnostics.candidates, 4);
    assert_eq!(rule.diagnostics.possible, 2);
}

#[test]
fn own_leaf_range_fails_while_green_region_passes() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let own = query_leaf().project(&[1]);
    assert_eq!(est.crp_local(&TOY_X, &[1], &own).unwrap().crp, 0.0);
    assert!(est.crp_local(&TOY_X, &[1], &green_region()).unwrap().crp >= 0.9);
}

#[test]
fn toy_partition_regional_rule_is_the_green_region() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let region = query_leaf();
    assert!((est.cdp_rule(&region, &[1]).unwrap() - 10.0 / 27.0).abs() < 1e-15);
    let rule = est.build_regional_rule(&region, &[1], 0.9).unwrap();
    assert!(matches!(rule.scope, RuleScope::Regional { .. }));
    assert_eq!(rule.rectangles.len(), 1);
    assert_eq!(rule.rectangles[0].rect, green_region());
    for r in &rule.rectangles {
        assert!(est.crp_rule(&region, &[1], &r.rect).unwrap().crp >= 0.9);
    }
}

#[test]
fn instance_already_in_target_gives_degenerate_rules() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let inside = [4.0, 3.0];
    let rule = est.build_local_rule(&inside, &[1], 0.9).unwrap();
    assert!(rule.degenerate);
    assert!(rule.rectangles.is_empty());

    let tree = &forest.trees()[0];
    let green_leaf = tree.leaf(tree.leaf_index(&inside)).region.clone();
    let rule = est.build_regional_rule(&green_leaf, &[1], 0.9).unwrap();
    assert!(rule.degenerate);
    assert!(rule.rectangles.is_empty());
}

#[test]
fn rules_round_trip_through_json() {
    let forest = toy_partition();
    let est = Estimator::new(&forest, TargetSet::Class(GREEN)).unwrap();
    let rule = est.build_local_rule(&TOY_X, &[1], 0.9).unwrap();
    let ds = forest.train_data();
    let json = rule.to_json(ds.features(), ds.target());
    let back = CounterfactualRule::from_json(&json, ds.features(), ds.target()).unwrap();
    assert_eq!(back.s, rule.s);
    assert_eq!(back.rectangles, rule.rectangles);
    assert_eq!(back.target, rule.target);
    assert_eq!(back.pi_c, rule.pi_c);
    assert_eq!(json["S"], serde_json::json!(["x1"]));
}

/// Every subset of the candidates scored directly.
fn oracle_minimal(est: &Estimator<'_, f64>, x: &[f64], candidates: &[usize], pi: f64) -> Vec<Vec<usize>> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let mut best_size = usize::MAX;
    let mut out = Vec::new();
    for mask in 0u32..(1 << sorted.len()) {
        let s: Vec<usize> = (0..sorted.len()).filter(|b| mask & (1 << b) != 0).map(|b| sorted[b]).collect();
        let Ok(v) = est.cdp(x, &s) else { continue };
        if v >= pi {
            match s.len().cmp(&best_size) {
                std::cmp::Ordering::Less => {
                    best_size = s.len();
                    out = vec![s];
                }
                std::cmp::Ordering::Equal => out.push(s),
                std::cmp::Ordering::Greater => {}
            }
        }
    }
    out.sort();
    out
}

#[test]
fn exhaustive_search_matches_subset_enumeration() {
    let ds = synthetic_classification(300, 5, 50);
    let forest = small_forest(&ds, 6, 5, 51);
    let est = Estimator::new(&forest, TargetSet::Class(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut found = 0;
    for _ in 0..25 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..0.5)).collect();
        for pi in [0.5, 0.7, 0.9] {
            let cfg = SearchConfig {
                pi,
                k: 5,
                ..SearchConfig::default()
            };
            let search = est.minimal_divergent(&x, &cfg).unwrap();
            let oracle = oracle_minimal(&est, &x, &search.candidates, pi);
            let got: Vec<Vec<usize>> = search.explanations.iter().map(|e| e.features.clone()).collect();
            assert_eq!(got, oracle, "x={x:?} pi={pi}");
            found += usize::from(!got.is_empty());
        }
    }
    assert!(found > 0);
}

#[test]
fn candidates_follow_split_frequency() {
    let ds = synthetic_classification(300, 6, 53);
    let forest = small_forest(&ds, 6, 5, 54);
    let counts = forest.split_frequency();
    let cands = candidate_features(&forest, 3, &[]);
    assert_eq!(cands.len(), 3);
    for w in cands.windows(2) {
        assert!(counts[w[0]] >= counts[w[1]]);
    }
    let rest_max = (0..6).filter(|j| !cands.contains(j)).map(|j| counts[j]).max().unwrap();
    assert!(counts[*cands.last().unwrap()] >= rest_max);
    let excluded = candidate_features(&forest, 3, &[cands[0]]);
    assert!(!excluded.contains(&cands[0]));
}

#[test]
fn path_sampling_only_reports_sets_reaching_pi() {
    let ds = synthetic_classification(300, 5, 55);
    let forest = small_forest(&ds, 6, 5, 56);
    let est = Estimator::new(&forest, TargetSet::Class(1)).unwrap();
    let cfg = SearchConfig {
        pi: 0.7,
        k: 5,
        strategy: Strategy::PathSampled { m: 50, seed: 3 },
        ..SearchConfig::default()
    };
    let x = [0.2, 0.3, 0.5, 0.5, 0.5];
    let search = est.minimal_divergent(&x, &cfg).unwrap();
    assert!(search.evaluated <= 50);
    let exhaustive = est
        .minimal_divergent(&x, &SearchConfig { pi: 0.7, k: 5, ..SearchConfig::default() })
        .unwrap();
    for e in &search.explanations {
        assert!(e.cdp >= 0.7);
        assert!(!e.minimal);
        if let Some(min) = exhaustive.explanations.first() {
            assert!(e.features.len() >= min.features.len());
        }
    }
}

fn mergeable(a: &Hyperrectangle<f64>, b: &Hyperrectangle<f64>) -> bool {
    let dims: BTreeSet<usize> = a.support().chain(b.support()).collect();
    let differing: Vec<usize> = dims.iter().copied().filter(|&j| a.interval(j) != b.interval(j)).collect();
    match differing.as_slice() {
        [] => true,
        [d] => a.interval(*d).touches(&b.interval(*d)),
        _ => false,
    }
}

fn covered(rects: &[Hyperrectangle<f64>], x: &[f64]) -> bool {
    rects.iter().any(|r| r.contains(x))
}

#[test]
fn adjacent_boxes_merge() {
    let a = Hyperrectangle::from_intervals([(0, Interval::new(0.0, 1.0).unwrap()), (1, Interval::new(0.0, 1.0).unwrap())]);
    let b = Hyperrectangle::from_intervals([(0, Interval::new(1.0, 2.0).unwrap()), (1, Interval::new(0.0, 1.0).unwrap())]);
    let merged = merge_rectangles(&[a.clone(), b]);
    assert_eq!(
        merged,
        vec![Hyperrectangle::from_intervals([(0, Interval::new(0.0, 2.0).unwrap()), (1, Interval::new(0.0, 1.0).unwrap())])]
    );
    let c = Hyperrectangle::from_intervals([(0, Interval::new(2.0, 3.0).unwrap()), (1, Interval::new(0.0, 1.0).unwrap())]);
    assert_eq!(merge_rectangles(&[a.clone(), c.clone()]).len(), 2);
    let leaf_like = Hyperrectangle::from_intervals([(0, Interval::new(1.0f64.next_up(), 2.0).unwrap()), (1, Interval::new(0.0, 1.0).unwrap())]);
    assert_eq!(merge_rectangles(&[a, leaf_like]).len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merging_preserves_the_union_in_one_dimension(ends in prop::collection::vec((0u8..10, 0u8..10), 1..8)) {
        let rects: Vec<Hyperrectangle<f64>> = ends
            .iter()
            .map(|&(a, b)| {
                let (lo, hi) = (a.min(b) as f64, a.max(b) as f64);
                Hyperrectangle::from_intervals([(0, Interval::new(lo, hi).unwrap())])
            })
            .collect();
        let merged = merge_rectangles(&rects);
        prop_assert!(merged.len() <= rects.len());
        for k in 0..=10_000 {
            let x = [-0.5 + 11.0 * k as f64 / 10_000.0];
            prop_assert_eq!(covered(&rects, &x), covered(&merged, &x), "x = {}", x[0]);
        }
        for (i, a) in merged.iter().enumerate() {
            for b in &merged[i + 1..] {
                prop_assert!(!mergeable(a, b));
            }
        }
    }

    #[test]
    fn merging_preserves_the_union_in_two_dimensions(cells in prop::collection::btree_set((0u8..5, 0u8..5), 1..12)) {
        // Grid cells shaped like tree leaves: (i, i + 1] x (j, j + 1].
        let cell = |k: u8| Interval::new((k as f64).next_up(), k as f64 + 1.0).unwrap();
        let rects: Vec<Hyperrectangle<f64>> = cells
            .iter()
            .map(|&(i, j)| Hyperrectangle::from_intervals([(0, cell(i)), (1, cell(j))]))
            .collect();
        let merged = merge_rectangles(&rects);
        prop_assert!(merged.len() <= rects.len());
        for a in 0..=120 {
            for b in 0..=120 {
                let x = [a as f64 / 20.0 - 0.5, b as f64 / 20.0 - 0.5];
                prop_assert_eq!(covered(&rects, &x), covered(&merged, &x));
            }
        }
        for (i, a) in merged.iter().enumerate() {
            for b in &merged[i + 1..] {
                prop_assert!(!mergeable(a, b));
            }
        }
    }
}

#[test]
fn rule_rectangles_respect_the_threshold_and_stay_on_s() {
    let ds = synthetic_classification(400, 4, 57);
    let forest = small_forest(&ds, 8, 6, 58);
    let est = Estimator::new(&forest, TargetSet::Class(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let mut built = 0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..0.4)).collect();
        for s in [vec![0], vec![1], vec![0, 1]] {
            let rule = est.build_local_rule(&x, &s, 0.9).unwrap();
            for (i, r) in rule.rectangles.iter().enumerate() {
                built += 1;
                assert!(r.rect.support().all(|j| s.contains(&j)));
                let check = est.crp_local(&x, &s, &r.rect).unwrap();
                assert!(check.crp >= 0.9);
                assert_eq!(check.crp, r.crp);
                for other in &rule.rectangles[i + 1..] {
                    assert!(!r.rect.overlaps(&other.rect));
                    assert!(r.plausibility >= other.plausibility);
                }
            }
        }
    }
    assert!(built > 0);
}
