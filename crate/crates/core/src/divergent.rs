//! Minimal divergent explanations: the smallest feature sets whose release
//! moves the outcome into the target set with probability at least `pi`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TargetSet;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::forest::Forest;
use crate::rect::Hyperrectangle;
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_PI: f64 = 0.9;
pub const DEFAULT_PATH_SAMPLES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    /// All subsets of the candidates by increasing size; minimality is certified.
    Exhaustive,
    /// Up to `m` distinct feature sets read off root-to-leaf path prefixes.
    PathSampled { m: usize, seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::PathSampled { .. } => "path_sampled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DivergentExplanation<T> {
    pub features: Vec<usize>,
    pub cdp: T,
    /// True when no smaller candidate subset reaches `pi` (exhaustive search only).
    pub minimal: bool,
}

/// Outcome of a search, including diagnostics when nothing reaches `pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DivergentSearch<T> {
    /// All achievers of the minimal size, lexicographic on feature indices.
    pub explanations: Vec<DivergentExplanation<T>>,
    pub candidates: Vec<usize>,
    pub k: usize,
    pub strategy: Strategy,
    pub pi: T,
    /// Number of subsets evaluated.
    pub evaluated: usize,
    /// Highest-probability subset seen, reported whether or not it reached `pi`.
    pub best: Option<DivergentExplanation<T>>,
}

impl<T: Scalar> DivergentSearch<T> {
    pub fn found(&self) -> bool {
        !self.explanations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig<T> {
    pub pi: T,
    pub k: usize,
    pub strategy: Strategy,
    /// Features never released (immutable attributes).
    pub exclude: Vec<usize>,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        Self {
            pi: T::lit(DEFAULT_PI),
            k: DEFAULT_K,
            strategy: Strategy::Exhaustive,
            exclude: Vec::new(),
        }
    }
}

impl<T: Scalar> SearchConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.pi > T::zero() && self.pi <= T::one()) {
            return Err(Error::InvalidParameter(format!("pi must lie in (0, 1], got {}", self.pi)));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if let Strategy::PathSampled { m: 0, .. } = self.strategy {
            return Err(Error::InvalidParameter("path sampling needs m >= 1".into()));
        }
        Ok(())
    }
}

/// Top-`k` features by split count (ties to the lower index), skipping unused and excluded ones.
pub fn candidate_features<T: Scalar>(forest: &Forest<T>, k: usize, exclude: &[usize]) -> Vec<usize> {
    let p = forest.n_features();
    if k > p {
        log::warn!("K = {k} exceeds the {p} available features; using {p}");
    }
    let counts = forest.split_frequency();
    let mut order: Vec<usize> = (0..p).filter(|j| counts[*j] > 0 && !exclude.contains(j)).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k.min(p));
    order
}

/// All `size`-subsets of `items` (ascending input gives ascending subsets, in lexicographic order).
pub(crate) fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(items: &[usize], size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        let needed = size - current.len();
        for i in start..=items.len().saturating_sub(needed) {
            if i >= items.len() {
                break;
            }
            current.push(items[i]);
            rec(items, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, size, 0, &mut current, &mut out);
    out
}

fn evaluate<T, F>(subsets: Vec<Vec<usize>>, objective: &F) -> Result<Vec<(Vec<usize>, Option<T>)>>
where
    T: Scalar,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    subsets
        .into_par_iter()
        .map(|s| match objective(&s) {
            Ok(v) => Ok((s, Some(v))),
            Err(Error::EmptySupport(_)) => Ok((s, None)),
            Err(e) => Err(e),
        })
        .collect()
}

fn update_best<T: Scalar>(best: &mut Option<DivergentExplanation<T>>, scored: &[(Vec<usize>, Option<T>)]) {
    for (s, v) in scored {
        let Some(v) = *v else { continue };
        let better = match best {
            None => true,
            Some(b) => v > b.cdp || (v == b.cdp && (s.len(), s) < (b.features.len(), &b.features)),
        };
        if better {
            *best = Some(DivergentExplanation {
                features: s.clone(),
                cdp: v,
                minimal: false,
            });
        }
    }
}

fn path_subsets<T: Scalar>(forest: &Forest<T>, candidates: &[usize], k: usize, m: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    sets.insert(Vec::new());
    for tree in forest.trees() {
        for path in tree.paths() {
            let mut prefix = BTreeSet::new();
            for j in path {
                if candidates.contains(&j) {
                    prefix.insert(j);
                    if prefix.len() <= k {
                        sets.insert(prefix.iter().copied().collect());
                    }
                }
            }
        }
    }
    let mut all: Vec<Vec<usize>> = sets.into_iter().collect();
    if all.len() > m {
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        all.truncate(m);
        all.sort();
    }
    all
}

/// Generic search over subsets of the candidates with a user objective.
pub fn search<T, F>(forest: &Forest<T>, cfg: &SearchConfig<T>, objective: F) -> Result<DivergentSearch<T>>
where
    T: Scalar,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    cfg.validate()?;
    let candidates = candidate_features(forest, cfg.k, &cfg.exclude);
    let mut sorted = candidates.clone();
    sorted.sort_unstable();
    let max_size = cfg.k.min(candidates.len());
    let mut best = None;
    let mut evaluated = 0;
    let mut explanations = Vec::new();
    match cfg.strategy {
        Strategy::Exhaustive => {
            for size in 0..=max_size {
                let scored = evaluate(combinations(&sorted, size), &objective)?;
                evaluated += scored.len();
                update_best(&mut best, &scored);
                explanations = achievers(&scored, cfg.pi, true);
                if !explanations.is_empty() {
                    break;
                }
            }
        }
        Strategy::PathSampled { m, seed } => {
            let scored = evaluate(path_subsets(forest, &candidates, max_size, m, seed), &objective)?;
            evaluated = scored.len();
            update_best(&mut best, &scored);
            let reached = achievers(&scored, cfg.pi, false);
            if let Some(min) = reached.iter().map(|e| e.features.len()).min() {
                explanations = reached.into_iter().filter(|e| e.features.len() == min).collect();
            }
        }
    }
    if explanations.is_empty() {
        log::info!("no subset reaches pi = {}", cfg.pi);
    }
    Ok(DivergentSearch {
        explanations,
        candidates,
        k: cfg.k,
        strategy: cfg.strategy,
        pi: cfg.pi,
        evaluated,
        best,
    })
}

fn achievers<T: Scalar>(scored: &[(Vec<usize>, Option<T>)], pi: T, minimal: bool) -> Vec<DivergentExplanation<T>> {
    let mut out: Vec<DivergentExplanation<T>> = scored
        .iter()
        .filter_map(|(s, v)| {
            v.filter(|v| *v >= pi).map(|cdp| DivergentExplanation {
                features: s.clone(),
                cdp,
                minimal,
            })
        })
        .collect();
    out.sort_by(|a, b| a.features.cmp(&b.features));
    out
}

impl<T: Scalar> Estimator<'_, T> {
    pub fn minimal_divergent(&self, x: &[T], cfg: &SearchConfig<T>) -> Result<DivergentSearch<T>> {
        search(self.forest(), cfg, |s| self.cdp(x, s))
    }

    pub fn minimal_divergent_rule(&self, r: &Hyperrectangle<T>, cfg: &SearchConfig<T>) -> Result<DivergentSearch<T>> {
        search(self.forest(), cfg, |s| self.cdp_rule(r, s))
    }
}

pub fn minimal_divergent<T: Scalar>(
    forest: &Forest<T>,
    x: &[T],
    target: &TargetSet<T>,
    cfg: &SearchConfig<T>,
) -> Result<DivergentSearch<T>> {
    Estimator::new(forest, *target)?.minimal_divergent(x, cfg)
}

pub fn minimal_divergent_rule<T: Scalar>(
    forest: &Forest<T>,
    r: &Hyperrectangle<T>,
    target: &TargetSet<T>,
    cfg: &SearchConfig<T>,
) -> Result<DivergentSearch<T>> {
    Estimator::new(forest, *target)?.minimal_divergent_rule(r, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(&[1, 3, 4], 2), vec![vec![1, 3], vec![1, 4], vec![3, 4]]);
        assert_eq!(combinations(&[1, 3], 0), vec![Vec::<usize>::new()]);
        assert!(combinations(&[1], 2).is_empty());
        assert_eq!(combinations(&[0, 1, 2, 3, 4], 3).len(), 10);
    }
}
