//! Shared state for repeated conditional estimates against one target set.

use crate::data::TargetSet;
use crate::error::{Error, Result};
use crate::forest::{Forest, TargetCounts};
use crate::scalar::Scalar;

/// A forest paired with a target set, caching which training rows hit the target.
///
/// Building one is `O(n * k)`; every estimate afterwards reuses the counts.
#[derive(Clone, Debug)]
pub struct Estimator<'a, T> {
    forest: &'a Forest<T>,
    target: TargetSet<T>,
    counts: TargetCounts,
}

impl<'a, T: Scalar> Estimator<'a, T> {
    pub fn new(forest: &'a Forest<T>, target: TargetSet<T>) -> Result<Self> {
        target.validate(forest.target())?;
        let counts = forest.target_counts(&target);
        Ok(Self { forest, target, counts })
    }

    pub fn forest(&self) -> &'a Forest<T> {
        self.forest
    }

    pub fn target(&self) -> &TargetSet<T> {
        &self.target
    }

    pub fn row_hit(&self, i: usize) -> bool {
        self.counts.row_hit[i]
    }

    pub(crate) fn leaf_hits(&self, tree: usize, leaf: usize) -> usize {
        self.counts.leaf_hits[tree][leaf]
    }
}

/// Per-tree `(rows, hits)` pairs averaged over trees with a nonempty pool.
pub(crate) fn tree_average<T: Scalar>(per_tree: &[(usize, usize)], what: &str) -> Result<T> {
    let mut total = 0f64;
    let mut used = 0usize;
    for &(rows, hits) in per_tree {
        if rows > 0 {
            total += hits as f64 / rows as f64;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::EmptySupport(format!("no training row supports the {what}")));
    }
    Ok(T::lit(total / used as f64))
}

/// Complement of `s` in `0..p`, ascending.
pub fn complement(s: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|j| !s.contains(j)).collect()
}
