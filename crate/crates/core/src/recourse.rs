//! Concrete recourses: simulated annealing over rule rectangles with the
//! isolation-forest score as energy, and the closed-form box projection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::iforest::IsolationForest;
use crate::rect::Hyperrectangle;
use crate::rules::CounterfactualRule;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealingConfig {
    pub max_iter: usize,
    pub t0: f64,
    pub cooling: f64,
    pub seed: u64,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            t0: 1.0,
            cooling: 0.95,
            seed: 0,
        }
    }
}

impl AnnealingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidParameter("initial temperature must be positive".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidParameter("cooling rate must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Recourse<T> {
    pub x_cf: Vec<T>,
    /// Released features.
    pub changed: Vec<usize>,
    /// Anomaly score of `x_cf` (lower is more plausible).
    pub energy: T,
    /// Index of the rectangle the recourse was drawn from.
    pub rule_id: usize,
    pub seed: u64,
    /// Whether the query model maps `x_cf` into the target; filled in by evaluation.
    pub accepted_by_model: Option<bool>,
}

/// Per-iteration record of one annealing chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnealTrace {
    pub initial_energy: f64,
    /// Energy of the tracked best state after each iteration.
    pub best_energy: Vec<f64>,
    /// `(delta, accepted)` for each proposal.
    pub moves: Vec<(f64, bool)>,
}

/// Empirical values of each feature of `s` over training rows inside `rect`.
pub fn value_pools<T: Scalar>(ds: &Dataset<T>, s: &[usize], rect: &Hyperrectangle<T>) -> Result<BTreeMap<usize, Vec<T>>> {
    let rows: Vec<&[T]> = ds.rows().filter(|r| rect.contains(r)).collect();
    let mut pools = BTreeMap::new();
    for &j in s {
        if rows.is_empty() {
            return Err(Error::EmptyPool {
                feature: j,
                rectangle: rect.to_string(),
            });
        }
        pools.insert(j, rows.iter().map(|r| r[j]).collect());
    }
    Ok(pools)
}

/// Draws a uniformly random nonempty subset of `0..n`.
fn nonempty_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    loop {
        let picked: Vec<usize> = (0..n).filter(|_| rng.gen::<bool>()).collect();
        if !picked.is_empty() {
            return picked;
        }
    }
}

/// Anneals inside `rect` over the features `s`; coordinates outside `s` stay at `x`.
pub fn anneal<T: Scalar>(
    x: &[T],
    s: &[usize],
    rect: &Hyperrectangle<T>,
    ds: &Dataset<T>,
    iforest: &IsolationForest<T>,
    cfg: &AnnealingConfig,
) -> Result<(Recourse<T>, AnnealTrace)> {
    cfg.validate()?;
    if s.is_empty() {
        return Err(Error::InvalidParameter("no feature to change".into()));
    }
    let pools = value_pools(ds, s, rect)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng, j: usize| {
        let pool = &pools[&j];
        pool[rng.gen_range(0..pool.len())]
    };

    let mut current = x.to_vec();
    for &j in s {
        current[j] = draw(&mut rng, j);
    }
    let mut e_current = iforest.score(&current).as_f64();
    let mut best = current.clone();
    let mut e_best = e_current;
    let mut trace = AnnealTrace {
        initial_energy: e_current,
        best_energy: Vec::with_capacity(cfg.max_iter),
        moves: Vec::with_capacity(cfg.max_iter),
    };
    let mut temperature = cfg.t0;
    // The initial state counts as the first iteration.
    for _ in 1..cfg.max_iter {
        let mut proposal = current.clone();
        for k in nonempty_subset(&mut rng, s.len()) {
            proposal[s[k]] = draw(&mut rng, s[k]);
        }
        let e_new = iforest.score(&proposal).as_f64();
        let delta = e_new - e_current;
        let u: f64 = rng.gen();
        let accepted = delta < 0.0 || (-delta / temperature).exp() > u;
        if accepted {
            current = proposal;
            e_current = e_new;
        }
        if e_current < e_best {
            best = current.clone();
            e_best = e_current;
        }
        trace.moves.push((delta, accepted));
        trace.best_energy.push(e_best);
        temperature *= cfg.cooling;
    }
    let recourse = Recourse {
        x_cf: best,
        changed: s.to_vec(),
        energy: T::lit(e_best),
        rule_id: 0,
        seed: cfg.seed,
        accepted_by_model: None,
    };
    Ok((recourse, trace))
}

/// Samples a recourse from the first (most plausible) rectangle of `rule`.
pub fn sample_recourse<T: Scalar>(
    x: &[T],
    rule: &CounterfactualRule<T>,
    ds: &Dataset<T>,
    iforest: &IsolationForest<T>,
    cfg: &AnnealingConfig,
) -> Result<Recourse<T>> {
    let rect = rule
        .rectangles
        .first()
        .ok_or_else(|| Error::InvalidParameter("rule has no rectangle to sample from".into()))?;
    anneal(x, &rule.s, &rect.rect, ds, iforest, cfg).map(|(r, _)| r)
}

/// Coordinatewise clamp onto `rect`; the nearest point of the box in l1 and l2.
pub fn l1_project<T: Scalar>(x: &[T], rect: &Hyperrectangle<T>) -> Vec<T> {
    let mut out = x.to_vec();
    for (j, iv) in rect.iter() {
        out[j] = iv.clamp(x[j]);
    }
    out
}

/// As [`l1_project`], snapping categorical coordinates to the nearest code inside the box.
pub fn project_with_schema<T: Scalar>(x: &[T], rect: &Hyperrectangle<T>, features: &[FeatureSpec]) -> Vec<T> {
    let mut out = l1_project(x, rect);
    for (j, iv) in rect.iter() {
        if features.get(j).map(|f| f.kind) != Some(FeatureKind::Categorical) {
            continue;
        }
        let (lo, hi) = (iv.lo.ceil(), iv.hi.floor());
        if lo <= hi {
            out[j] = out[j].round().max(lo).min(hi);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rect::Interval;

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let rect = Hyperrectangle::from_intervals([(0, Interval::new(1.0, 2.0).unwrap())]);
        assert_eq!(l1_project(&[0.5, 9.0], &rect), vec![1.0, 9.0]);
        assert_eq!(l1_project(&[1.5, 9.0], &rect), vec![1.5, 9.0]);
        let once = l1_project(&[3.0, 0.0], &rect);
        assert_eq!(l1_project(&once, &rect), once);
    }

    #[test]
    fn categorical_projection_snaps_to_codes() {
        let features = vec![FeatureSpec::categorical("c", ["a", "b", "c", "d"])];
        let rect = Hyperrectangle::from_intervals([(0, Interval::new(1.5, 3.5).unwrap())]);
        assert_eq!(project_with_schema(&[0.0], &rect, &features), vec![2.0]);
        assert_eq!(project_with_schema(&[3.0], &rect, &features), vec![3.0]);
    }

    #[test]
    fn subsets_are_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = nonempty_subset(&mut rng, 3);
            assert!(!s.is_empty() && s.iter().all(|&k| k < 3));
        }
    }
}
