mod common;

use cfrules::recourse::{anneal, value_pools};
use cfrules::{l1_project, AnnealingConfig, Error, Hyperrectangle, Interval, IsolationForest, IsolationParams};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (cfrules::Dataset<f64>, IsolationForest<f64>) {
    let ds = synthetic_regression(400, 4, 70);
    let iso = IsolationForest::fit(&ds, &IsolationParams { n_trees: 50, ..IsolationParams::default() }).unwrap();
    (ds, iso)
}

fn rect(bounds: &[(usize, f64, f64)]) -> Hyperrectangle<f64> {
    Hyperrectangle::from_intervals(bounds.iter().map(|&(j, lo, hi)| (j, Interval::new(lo, hi).unwrap())))
}

#[test]
fn single_iteration_returns_the_initial_draw() {
    let (ds, iso) = setup();
    let x = ds.row(0).to_vec();
    let r = rect(&[(0, 0.2, 0.6), (2, 0.1, 0.9)]);
    let cfg = AnnealingConfig { max_iter: 1, seed: 4, ..AnnealingConfig::default() };
    let (rec, trace) = anneal(&x, &[0, 2], &r, &ds, &iso, &cfg).unwrap();
    assert!(trace.moves.is_empty());
    assert_eq!(rec.energy, trace.initial_energy);
    assert_eq!(rec.energy, iso.score(&rec.x_cf));
}

#[test]
fn near_zero_temperature_is_greedy() {
    let (ds, iso) = setup();
    let x = ds.row(3).to_vec();
    let r = rect(&[(0, 0.0, 0.7), (1, 0.3, 1.0)]);
    let cfg = AnnealingConfig { max_iter: 300, t0: 1e-12, seed: 9, ..AnnealingConfig::default() };
    let (_, trace) = anneal(&x, &[0, 1], &r, &ds, &iso, &cfg).unwrap();
    for &(delta, accepted) in &trace.moves {
        if accepted {
            assert!(delta <= 0.0);
        }
        if delta > 0.0 {
            assert!(!accepted);
        }
    }
}

#[test]
fn empty_pool_is_reported() {
    let (ds, iso) = setup();
    let x = ds.row(0).to_vec();
    let r = rect(&[(0, 5.0, 6.0)]);
    assert!(matches!(value_pools(&ds, &[0], &r), Err(Error::EmptyPool { .. })));
    assert!(anneal(&x, &[0], &r, &ds, &iso, &AnnealingConfig::default()).is_err());
}

#[test]
fn recourses_from_training_like_boxes_are_mostly_inliers() {
    let (ds, iso) = setup();
    let r = rect(&[(0, 0.2, 0.8), (1, 0.2, 0.8)]);
    let mut inliers = 0;
    for run in 0..100 {
        let x = ds.row(run).to_vec();
        let cfg = AnnealingConfig { max_iter: 200, seed: run as u64, ..AnnealingConfig::default() };
        let (rec, _) = anneal(&x, &[0, 1], &r, &ds, &iso, &cfg).unwrap();
        inliers += usize::from(iso.is_inlier(&rec.x_cf));
    }
    assert!(inliers >= 90, "{inliers} inliers");
}

#[test]
fn isolation_forest_is_calibrated_on_training_rows() {
    let (ds, iso) = setup();
    let inliers = ds.rows().filter(|r| iso.is_inlier(r)).count();
    assert!(inliers as f64 >= 0.88 * ds.n_rows() as f64);
    let mut scores: Vec<f64> = ds.rows().map(|r| iso.score(r)).collect();
    scores.sort_by(f64::total_cmp);
    assert!(iso.score(&[10.0, 10.0, -10.0, 10.0]) > scores[scores.len() / 2]);
    for s in scores {
        assert!(s > 0.0 && s < 1.0);
    }
}

#[test]
fn l1_projection_beats_random_points_in_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let bounds: Vec<(usize, f64, f64)> = [0usize, 2]
            .iter()
            .map(|&j| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                (j, a.min(b), a.max(b))
            })
            .collect();
        let r = rect(&bounds);
        let p = l1_project(&x, &r);
        assert!(r.contains(&p));
        assert_eq!(p[1], x[1]);
        let dist = |z: &[f64]| z.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let d = dist(&p);
        for _ in 0..10_000 {
            let mut z = x.clone();
            for &(j, lo, hi) in &bounds {
                z[j] = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
            }
            assert!(d <= dist(&z) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn annealing_stays_in_the_box_and_never_worsens(
        row in 0usize..400,
        a in 0.0..0.5f64,
        w in 0.2..0.5f64,
        seed in any::<u64>(),
        t0 in 0.01..2.0f64,
    ) {
        let (ds, iso) = setup();
        let x = ds.row(row).to_vec();
        let r = rect(&[(1, a, a + w), (3, a, a + w)]);
        let cfg = AnnealingConfig { max_iter: 100, t0, seed, ..AnnealingConfig::default() };
        let (rec, trace) = anneal(&x, &[1, 3], &r, &ds, &iso, &cfg).unwrap();
        prop_assert!(r.contains(&rec.x_cf));
        prop_assert_eq!(rec.x_cf[0], x[0]);
        prop_assert_eq!(rec.x_cf[2], x[2]);
        prop_assert_eq!(trace.best_energy.len(), 99);
        let mut prev = trace.initial_energy;
        for &e in &trace.best_energy {
            prop_assert!(e <= prev);
            prev = e;
        }
        prop_assert_eq!(rec.energy, prev);
        let again = anneal(&x, &[1, 3], &r, &ds, &iso, &cfg).unwrap().0;
        prop_assert_eq!(again, rec);
    }

    #[test]
    fn l1_projection_is_idempotent(x in prop::collection::vec(-3.0..3.0f64, 3), lo in -1.0..0.0f64, hi in 0.0..1.0f64) {
        let r = rect(&[(0, lo, hi), (1, lo, hi)]);
        let once = l1_project(&x, &r);
        prop_assert_eq!(l1_project(&once, &r), once.clone());
        if r.contains(&x) {
            prop_assert_eq!(once, x);
        }
    }
}
