//! Recourse quality metrics: accuracy, plausibility, sparsity, cost and stability,
//! reported per class direction with their denominators.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::data::{Dataset, FeatureKind, MinMaxScaler, TargetSet};
use crate::divergent::SearchConfig;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::forest::Forest;
use crate::iforest::IsolationForest;
use crate::recourse::{sample_recourse, AnnealingConfig, Recourse};
use crate::rules::DEFAULT_PI_C;
use crate::scalar::Scalar;

pub const DEFAULT_SIGMAS: [f64; 3] = [0.01, 0.025, 0.05];
pub const DEFAULT_BINS: usize = 10;

/// A rate with its numerator and denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub num: usize,
    pub den: usize,
}

impl Rate {
    pub fn new(num: usize, den: usize) -> Result<Self> {
        if den == 0 {
            return Err(Error::EmptyInput("rate over an empty set".into()));
        }
        Ok(Self {
            value: num as f64 / den as f64,
            num,
            den,
        })
    }
}

fn require_nonempty<T>(recourses: &[T]) -> Result<()> {
    if recourses.is_empty() {
        Err(Error::EmptyInput("no recourse to evaluate".into()))
    } else {
        Ok(())
    }
}

/// Fraction of recourses the model maps into the target.
pub fn accuracy<T: Scalar>(model: &Forest<T>, recourses: &[Recourse<T>], target: &TargetSet<T>) -> Result<Rate> {
    require_nonempty(recourses)?;
    let hits = recourses.iter().filter(|r| model.predict_in(&r.x_cf, target)).count();
    Rate::new(hits, recourses.len())
}

/// Fraction of recourses scored as inliers.
pub fn plausibility<T: Scalar>(iforest: &IsolationForest<T>, recourses: &[Recourse<T>]) -> Result<Rate> {
    require_nonempty(recourses)?;
    let inliers = recourses.iter().filter(|r| iforest.is_inlier(&r.x_cf)).count();
    Rate::new(inliers, recourses.len())
}

pub fn changed_count<T: Scalar>(x: &[T], x_cf: &[T]) -> usize {
    x.iter().zip(x_cf).filter(|(a, b)| a != b).count()
}

/// Mean number of changed coordinates.
pub fn sparsity<T: Scalar>(recourses: &[Recourse<T>], queries: &[Vec<T>]) -> Result<f64> {
    require_nonempty(recourses)?;
    if recourses.len() != queries.len() {
        return Err(Error::InvalidParameter("recourses and queries differ in length".into()));
    }
    let total: usize = recourses.iter().zip(queries).map(|(r, x)| changed_count(x, &r.x_cf)).sum();
    Ok(total as f64 / recourses.len() as f64)
}

/// Equal-frequency bins on continuous features; categorical features cost 1 per change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostBins<T> {
    /// Inner bin edges per feature; `None` for categorical features.
    pub edges: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> CostBins<T> {
    pub fn fit(ds: &Dataset<T>, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParameter("cost needs at least two bins".into()));
        }
        let n = ds.n_rows();
        let edges = ds
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if f.kind == FeatureKind::Categorical {
                    return None;
                }
                let mut col: Vec<T> = (0..n).map(|i| ds.value(i, j)).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut e: Vec<T> = (1..bins)
                    .map(|k| col[((k * n) / bins).min(n - 1)])
                    .collect();
                e.dedup();
                Some(e)
            })
            .collect();
        Ok(Self { edges })
    }

    pub fn bin(&self, j: usize, v: T) -> usize {
        match &self.edges[j] {
            Some(e) => e.partition_point(|&edge| edge < v),
            None => v.to_usize().unwrap_or(0),
        }
    }

    pub fn cost(&self, x: &[T], x_cf: &[T]) -> f64 {
        (0..x.len())
            .map(|j| match &self.edges[j] {
                None => f64::from(u8::from(x[j] != x_cf[j])),
                Some(_) => self.bin(j, x[j]).abs_diff(self.bin(j, x_cf[j])) as f64,
            })
            .sum()
    }
}

/// Mean bin-distance cost.
pub fn cost<T: Scalar>(recourses: &[Recourse<T>], queries: &[Vec<T>], bins: &CostBins<T>) -> Result<f64> {
    require_nonempty(recourses)?;
    if recourses.len() != queries.len() {
        return Err(Error::InvalidParameter("recourses and queries differ in length".into()));
    }
    let total: f64 = recourses.iter().zip(queries).map(|(r, x)| bins.cost(x, &r.x_cf)).sum();
    Ok(total / recourses.len() as f64)
}

/// Class direction of a query: `Pos` moves label 1 to 0, `Neg` moves 0 to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Pos,
    Neg,
    All,
}

impl Direction {
    pub fn label(&self) -> &'static str {
        match self {
            Direction::Pos => "pos",
            Direction::Neg => "neg",
            Direction::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Query already in the target.
    Degenerate,
    /// No divergent set or no rule rectangle.
    NoRule,
    Failed(String),
}

/// Everything known about one explained query.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceOutcome<T> {
    pub id: usize,
    pub direction: Direction,
    pub target: TargetSet<T>,
    pub query: Vec<T>,
    pub status: Status,
    pub recourse: Option<Recourse<T>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub instances: usize,
    pub recourses: usize,
    pub degenerate: usize,
    pub no_rule: usize,
    pub failed: usize,
    pub accuracy: Option<Rate>,
    pub plausibility: Option<Rate>,
    pub sparsity: Option<f64>,
    pub cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub sigma: f64,
    pub stability: Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Keyed by `pos`, `neg`, `all` and `overall`.
    pub groups: BTreeMap<String, GroupMetrics>,
    /// Noise levels are standard deviations in normalised units.
    pub sigma_is_std: bool,
    pub stability: Vec<StabilityRow>,
    pub fingerprint: Option<String>,
}

fn group_metrics<T: Scalar>(
    model: &Forest<T>,
    iforest: &IsolationForest<T>,
    bins: &CostBins<T>,
    outcomes: &[&InstanceOutcome<T>],
) -> GroupMetrics {
    let mut g = GroupMetrics {
        instances: outcomes.len(),
        ..GroupMetrics::default()
    };
    let mut hits = 0;
    let mut inliers = 0;
    let mut changed = 0usize;
    let mut total_cost = 0.0;
    for o in outcomes {
        match &o.status {
            Status::Degenerate => g.degenerate += 1,
            Status::NoRule => g.no_rule += 1,
            Status::Failed(_) => g.failed += 1,
            Status::Ok => {}
        }
        let Some(r) = &o.recourse else { continue };
        g.recourses += 1;
        hits += usize::from(model.predict_in(&r.x_cf, &o.target));
        inliers += usize::from(iforest.is_inlier(&r.x_cf));
        changed += changed_count(&o.query, &r.x_cf);
        total_cost += bins.cost(&o.query, &r.x_cf);
    }
    if g.recourses > 0 {
        g.accuracy = Rate::new(hits, g.recourses).ok();
        g.plausibility = Rate::new(inliers, g.recourses).ok();
        g.sparsity = Some(changed as f64 / g.recourses as f64);
        g.cost = Some(total_cost / g.recourses as f64);
    }
    g
}

/// Aggregates per-instance outcomes into per-direction and overall metrics.
pub fn summarize<T: Scalar>(
    model: &Forest<T>,
    iforest: &IsolationForest<T>,
    bins: &CostBins<T>,
    outcomes: &[InstanceOutcome<T>],
) -> MetricReport {
    let mut groups = BTreeMap::new();
    for dir in [Direction::Pos, Direction::Neg, Direction::All] {
        let members: Vec<&InstanceOutcome<T>> = outcomes.iter().filter(|o| o.direction == dir).collect();
        if !members.is_empty() {
            groups.insert(dir.label().to_owned(), group_metrics(model, iforest, bins, &members));
        }
    }
    let all: Vec<&InstanceOutcome<T>> = outcomes.iter().collect();
    groups.insert("overall".to_owned(), group_metrics(model, iforest, bins, &all));
    MetricReport {
        groups,
        sigma_is_std: true,
        stability: Vec::new(),
        fingerprint: None,
    }
}

/// Adds Gaussian noise of standard deviation `sigma` (normalised units) to the
/// coordinates where `x_cf` differs from `x`, clipping to the observed range.
pub fn perturb<T: Scalar>(
    x: &[T],
    x_cf: &[T],
    scaler: &MinMaxScaler<T>,
    n_categories: &[usize],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    let mut out = x_cf.to_vec();
    if sigma <= 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, sigma).expect("finite positive sigma");
    for j in 0..x.len() {
        if x[j] == x_cf[j] {
            continue;
        }
        let eps = noise.sample(rng);
        if scaler.categorical[j] {
            let top = n_categories[j].saturating_sub(1).max(1) as f64;
            let z = (x_cf[j].as_f64() / top + eps).clamp(0.0, 1.0);
            out[j] = T::lit((z * top).round());
        } else {
            let (lo, hi) = (scaler.min[j].as_f64(), scaler.max[j].as_f64());
            let range = hi - lo;
            let z = (scaler.scale_value(j, x_cf[j]).as_f64() + eps).clamp(0.0, 1.0);
            out[j] = T::lit(lo + z * range);
        }
    }
    out
}

/// Fraction of (query, trial) pairs whose perturbed action keeps the model's target membership.
#[allow(clippy::too_many_arguments)]
pub fn stability<T: Scalar>(
    model: &Forest<T>,
    target_of: impl Fn(usize) -> TargetSet<T>,
    actions: &[(Vec<T>, Vec<T>)],
    scaler: &MinMaxScaler<T>,
    n_categories: &[usize],
    sigmas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    require_nonempty(actions)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("stability needs at least one trial".into()));
    }
    sigmas
        .iter()
        .enumerate()
        .map(|(k, &sigma)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut same = 0;
            for (i, (x, x_cf)) in actions.iter().enumerate() {
                let target = target_of(i);
                let base = model.predict_in(x_cf, &target);
                for _ in 0..trials {
                    let noisy = perturb(x, x_cf, scaler, n_categories, sigma, &mut rng);
                    same += usize::from(model.predict_in(&noisy, &target) == base);
                }
            }
            Ok(StabilityRow {
                sigma,
                stability: Rate::new(same, actions.len() * trials)?,
            })
        })
        .collect()
}

fn fmt_rate(r: &Option<Rate>) -> String {
    r.map(|r| format!("{:.2} ({}/{})", r.value, r.num, r.den)).unwrap_or_else(|| "-".into())
}

fn fmt_mean(v: &Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

impl MetricReport {
    /// Plain-text table with one column per direction.
    pub fn to_table(&self) -> String {
        let cols: Vec<(&String, &GroupMetrics)> = self.groups.iter().collect();
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "metric");
        for (name, _) in &cols {
            let _ = write!(out, "{:>20}", name);
        }
        out.push('\n');
        let rows: [(&str, Box<dyn Fn(&GroupMetrics) -> String>); 7] = [
            ("instances", Box::new(|g| g.instances.to_string())),
            ("recourses", Box::new(|g| g.recourses.to_string())),
            ("accuracy", Box::new(|g| fmt_rate(&g.accuracy))),
            ("plausibility", Box::new(|g| fmt_rate(&g.plausibility))),
            ("sparsity", Box::new(|g| fmt_mean(&g.sparsity))),
            ("cost", Box::new(|g| fmt_mean(&g.cost))),
            ("no_rule", Box::new(|g| (g.no_rule + g.failed).to_string())),
        ];
        for (label, f) in rows.iter() {
            let _ = write!(out, "{label:<14}");
            for (_, g) in &cols {
                let _ = write!(out, "{:>20}", f(g));
            }
            out.push('\n');
        }
        if !self.stability.is_empty() {
            out.push('\n');
            let _ = writeln!(out, "{:<14}{:>20}", "sigma", "stability");
            for row in &self.stability {
                let _ = writeln!(out, "{:<14}{:>20}", row.sigma, fmt_rate(&Some(row.stability)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, TargetSpec};

    fn table() -> Dataset<f64> {
        let x: Vec<f64> = (0..100).flat_map(|i| [i as f64, (i % 2) as f64]).collect();
        Dataset::new(
            vec![FeatureSpec::continuous("a"), FeatureSpec::categorical("c", ["u", "v"])],
            TargetSpec::regression("y"),
            x,
            (0..100).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    fn rec(x_cf: Vec<f64>) -> Recourse<f64> {
        Recourse {
            x_cf,
            changed: vec![],
            energy: 0.0,
            rule_id: 0,
            seed: 0,
            accepted_by_model: None,
        }
    }

    #[test]
    fn sparsity_counts_changed_coordinates() {
        let q = vec![vec![1.0, 0.0], vec![2.0, 1.0]];
        assert_eq!(sparsity(&[rec(q[0].clone()), rec(q[1].clone())], &q).unwrap(), 0.0);
        assert_eq!(sparsity(&[rec(vec![5.0, 0.0]), rec(vec![2.0, 0.0])], &q).unwrap(), 1.0);
        assert!(sparsity::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn cost_uses_bins_and_unit_categorical_steps() {
        let ds = table();
        let bins = CostBins::fit(&ds, 10).unwrap();
        assert_eq!(bins.cost(&[3.0, 0.0], &[3.0, 1.0]), 1.0);
        assert_eq!(bins.cost(&[11.0, 0.0], &[12.0, 0.0]), 0.0);
        assert_eq!(bins.cost(&[5.0, 0.0], &[25.0, 0.0]), 2.0);
        assert!(CostBins::fit(&ds, 1).is_err());
    }

    #[test]
    fn zero_noise_leaves_actions_untouched() {
        let ds = table();
        let scaler = MinMaxScaler::fit(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [1.0, 0.0];
        let x_cf = [50.0, 1.0];
        assert_eq!(perturb(&x, &x_cf, &scaler, &[0, 2], 0.0, &mut rng), x_cf.to_vec());
        let noisy = perturb(&x, &x_cf, &scaler, &[0, 2], 0.05, &mut rng);
        assert!(noisy[0] >= 0.0 && noisy[0] <= 99.0);
        assert!(noisy[1] == 0.0 || noisy[1] == 1.0);
        let unchanged = perturb(&x, &x, &scaler, &[0, 2], 0.05, &mut rng);
        assert_eq!(unchanged, x.to_vec());
    }
}

/// Settings for explaining and sampling one batch of queries.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalRunConfig<T> {
    pub search: SearchConfig<T>,
    pub pi_c: T,
    pub annealing: AnnealingConfig,
    /// Build the rule on the best-scoring set when no set reaches `pi`.
    pub fallback: bool,
}

impl<T: Scalar> Default for LocalRunConfig<T> {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            pi_c: T::lit(DEFAULT_PI_C),
            annealing: AnnealingConfig::default(),
            fallback: false,
        }
    }
}

/// Per-instance annealing seed derived from a master seed.
pub fn instance_seed(master: u64, id: usize) -> u64 {
    master ^ (id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Explains and samples a recourse for each `(id, x)`. The query model decides
/// degeneracy and success; the explainer inside `est` supplies rules.
pub fn local_outcomes<T: Scalar>(
    est: &Estimator<'_, T>,
    query: &Forest<T>,
    iforest: &IsolationForest<T>,
    train: &Dataset<T>,
    direction: Direction,
    instances: &[(usize, Vec<T>)],
    cfg: &LocalRunConfig<T>,
) -> Vec<InstanceOutcome<T>> {
    let target = *est.target();
    instances
        .par_iter()
        .map(|(id, x)| {
            let mut outcome = InstanceOutcome {
                id: *id,
                direction,
                target,
                query: x.clone(),
                status: Status::Ok,
                recourse: None,
            };
            if query.predict_in(x, &target) {
                outcome.status = Status::Degenerate;
                return outcome;
            }
            let explanation = match est.explain_local(x, &cfg.search, cfg.pi_c, cfg.fallback) {
                Ok(e) => e,
                Err(e) => {
                    outcome.status = Status::Failed(e.to_string());
                    return outcome;
                }
            };
            let Some(rule) = explanation.best_rule() else {
                outcome.status = if explanation.is_degenerate() { Status::Degenerate } else { Status::NoRule };
                return outcome;
            };
            let annealing = AnnealingConfig {
                seed: instance_seed(cfg.annealing.seed, *id),
                ..cfg.annealing.clone()
            };
            match sample_recourse(x, rule, train, iforest, &annealing) {
                Ok(mut r) => {
                    r.accepted_by_model = Some(query.predict_in(&r.x_cf, &target));
                    outcome.recourse = Some(r);
                }
                Err(e) => outcome.status = Status::Failed(e.to_string()),
            }
            outcome
        })
        .collect()
}
