//! Isolation forest used as the plausibility energy for recourses.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const EULER_GAMMA: f64 = 0.577_215_664_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationParams {
    pub n_trees: usize,
    /// Subsample size; `None` means `min(256, n)`.
    pub sample_size: Option<usize>,
    /// Fraction of training rows scored as outliers when calibrating the threshold.
    pub contamination: f64,
    pub seed: u64,
}

impl Default for IsolationParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            sample_size: None,
            contamination: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "lowercase")]
enum INode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IsolationForest<T> {
    trees: Vec<Vec<INode<T>>>,
    psi: usize,
    c_psi: f64,
    tau: f64,
    params: IsolationParams,
}

/// Average path length of an unsuccessful search in a binary search tree of `n` nodes.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

impl<T: Scalar> IsolationForest<T> {
    pub fn fit(ds: &Dataset<T>, params: &IsolationParams) -> Result<Self> {
        let n = ds.n_rows();
        let psi = params.sample_size.unwrap_or(256.min(n));
        if psi < 2 || psi > n {
            return Err(Error::InvalidParameter(format!(
                "subsample size must lie in [2, {n}], got {psi}"
            )));
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidParameter("isolation forest needs at least one tree".into()));
        }
        if !(0.0..1.0).contains(&params.contamination) {
            return Err(Error::InvalidParameter("contamination must lie in [0, 1)".into()));
        }
        let mut master = ChaCha8Rng::seed_from_u64(params.seed);
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
        let height = (psi as f64).log2().ceil() as usize;
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let rows = sample(&mut rng, n, psi).into_vec();
                let mut nodes = Vec::new();
                build(ds, rows, 0, height, &mut rng, &mut nodes);
                nodes
            })
            .collect();
        let mut forest = Self {
            trees,
            psi,
            c_psi: average_path_length(psi),
            tau: 1.0,
            params: params.clone(),
        };
        let mut scores: Vec<f64> = ds.rows().map(|r| forest.score_f64(r)).collect();
        scores.sort_by(f64::total_cmp);
        let rank = ((1.0 - params.contamination) * n as f64).ceil() as usize;
        forest.tau = scores[rank.clamp(1, n) - 1];
        Ok(forest)
    }

    fn path_length(tree: &[INode<T>], x: &[T]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match tree[id] {
                INode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                INode::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    fn score_f64(&self, x: &[T]) -> f64 {
        let mean = self.trees.iter().map(|t| Self::path_length(t, x)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / self.c_psi)
    }

    /// Anomaly score in `(0, 1)`; higher is more anomalous.
    pub fn score(&self, x: &[T]) -> T {
        T::lit(self.score_f64(x))
    }

    /// Calibrated inlier threshold.
    pub fn tau(&self) -> T {
        T::lit(self.tau)
    }

    pub fn is_inlier(&self, x: &[T]) -> bool {
        self.score_f64(x) <= self.tau
    }

    pub fn sample_size(&self) -> usize {
        self.psi
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &IsolationParams {
        &self.params
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn build<T: Scalar>(
    ds: &Dataset<T>,
    rows: Vec<usize>,
    depth: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<INode<T>>,
) -> usize {
    let id = nodes.len();
    nodes.push(INode::Leaf { size: rows.len() });
    if depth >= height || rows.len() <= 1 {
        return id;
    }
    let ranges: Vec<(usize, T, T)> = (0..ds.n_features())
        .filter_map(|j| {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &i in &rows {
                let v = ds.value(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo < hi).then_some((j, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return id;
    }
    let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let u: f64 = rng.gen();
    let mut threshold = T::lit(lo.as_f64() + u * (hi.as_f64() - lo.as_f64()));
    if threshold <= lo {
        threshold = lo.next_up();
    }
    let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| ds.value(i, feature) < threshold);
    let l = build(ds, left, depth + 1, height, rng, nodes);
    let r = build(ds, right, depth + 1, height, rng, nodes);
    nodes[id] = INode::Split {
        feature,
        threshold,
        left: l,
        right: r,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, TargetSpec};

    fn cloud(n: usize) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        Dataset::new(
            vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("b")],
            TargetSpec::regression("y"),
            x,
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn normaliser_matches_closed_form() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let h = (255f64).ln() + EULER_GAMMA;
        assert!((average_path_length(256) - (2.0 * h - 2.0 * 255.0 / 256.0)).abs() < 1e-12);
    }

    #[test]
    fn outliers_score_high_and_calibration_holds() {
        let ds = cloud(500);
        let f = IsolationForest::fit(&ds, &IsolationParams::default()).unwrap();
        assert_eq!(f.sample_size(), 256);
        let mut scores: Vec<f64> = ds.rows().map(|r| f.score(r)).collect();
        scores.sort_by(f64::total_cmp);
        let median = scores[scores.len() / 2];
        let far = f.score(&[10.0, -10.0]);
        assert!(far > median && far < 1.0);
        let inliers = ds.rows().filter(|r| f.is_inlier(r)).count();
        assert!(inliers as f64 >= 0.9 * ds.n_rows() as f64);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let ds = cloud(100);
        let a = IsolationForest::fit(&ds, &IsolationParams::default()).unwrap();
        let b = IsolationForest::fit(&ds, &IsolationParams::default()).unwrap();
        assert_eq!(a, b);
        assert!(IsolationForest::fit(
            &ds,
            &IsolationParams {
                sample_size: Some(1),
                ..IsolationParams::default()
            }
        )
        .is_err());
    }
}
