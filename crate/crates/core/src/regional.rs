//! Regional traversal: estimators conditioning on intervals as well as points.
//!
//! At a split on `j` with threshold `t`, a point goes one way, an interval
//! `[a, b]` goes left when `b <= t`, right when `a > t` and both ways when
//! `a <= t < b`. Rows of the reached leaves are pooled uniformly when they
//! fall inside every proper interval and, on fixed features, inside the
//! projected cell of the fixed values.

use std::collections::BTreeSet;

use crate::data::TargetSet;
use crate::error::{Error, Result};
use crate::estimator::{complement, tree_average, Estimator};
use crate::forest::{Forest, Tree, WeightVector};
use crate::rect::{Hyperrectangle, Interval};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint<T> {
    Free,
    Point(T),
    Region(Interval<T>),
}

impl<T: Scalar> Constraint<T> {
    /// `(go_left, go_right)` at a split `x <= t`.
    fn route(&self, t: T) -> (bool, bool) {
        match *self {
            Constraint::Free => (true, true),
            Constraint::Point(v) => (v <= t, v > t),
            Constraint::Region(iv) => (iv.lo <= t, iv.hi > t),
        }
    }
}

/// One constraint per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition<T> {
    constraints: Vec<Constraint<T>>,
}

impl<T: Scalar> Condition<T> {
    pub fn free(p: usize) -> Self {
        Self {
            constraints: vec![Constraint::Free; p],
        }
    }

    /// Every feature fixed at `x`.
    pub fn points(x: &[T]) -> Self {
        Self {
            constraints: x.iter().map(|&v| Constraint::Point(v)).collect(),
        }
    }

    /// Region constraints on the support of `rect`, free elsewhere.
    pub fn from_rect(p: usize, rect: &Hyperrectangle<T>) -> Self {
        let mut c = Self::free(p);
        c.restrict_to(rect, &(0..p).collect::<Vec<_>>());
        c
    }

    pub fn set(&mut self, j: usize, c: Constraint<T>) -> &mut Self {
        self.constraints[j] = c;
        self
    }

    pub fn with(mut self, j: usize, c: Constraint<T>) -> Self {
        self.constraints[j] = c;
        self
    }

    /// Fixes the features in `features` at the values of `x`.
    pub fn fix(&mut self, x: &[T], features: &[usize]) -> &mut Self {
        for &j in features {
            self.constraints[j] = Constraint::Point(x[j]);
        }
        self
    }

    /// Constrains the features in `features` to `rect` (free where `rect` is unconstrained).
    pub fn restrict_to(&mut self, rect: &Hyperrectangle<T>, features: &[usize]) -> &mut Self {
        for &j in features {
            self.constraints[j] = match rect.get(j) {
                Some(iv) => Constraint::Region(*iv),
                None => Constraint::Free,
            };
        }
        self
    }

    pub fn get(&self, j: usize) -> Constraint<T> {
        self.constraints[j]
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn is_free(&self) -> bool {
        self.constraints.iter().all(|c| matches!(c, Constraint::Free))
    }

    fn is_fixed(&self, j: usize) -> bool {
        match self.constraints[j] {
            Constraint::Point(_) => true,
            Constraint::Region(iv) => iv.lo == iv.hi,
            Constraint::Free => false,
        }
    }

    /// Per tree, the projected cell of the fixed features: the intersection of
    /// the ranges of the leaves reached by the fixed values alone.
    pub fn fixed_cells(&self, forest: &Forest<T>) -> Vec<Hyperrectangle<T>> {
        let fixed: Vec<usize> = (0..self.len()).filter(|&j| self.is_fixed(j)).collect();
        forest
            .trees()
            .iter()
            .map(|tree| {
                let mut leaves = Vec::new();
                tree.reach(
                    |j, t| {
                        if self.is_fixed(j) {
                            self.constraints[j].route(t)
                        } else {
                            (true, true)
                        }
                    },
                    &mut leaves,
                );
                let mut cell = Hyperrectangle::full();
                for &l in &leaves {
                    for &j in &fixed {
                        cell.constrain(j, tree.leaf(l).region.interval(j));
                    }
                }
                cell
            })
            .collect()
    }

    /// Box a pooled row must lie in: `cell` on fixed features and the proper intervals elsewhere.
    fn pool_box(&self, cell: &Hyperrectangle<T>) -> Hyperrectangle<T> {
        let mut bx = cell.clone();
        for (j, c) in self.constraints.iter().enumerate() {
            if let Constraint::Region(iv) = *c {
                if iv.lo < iv.hi {
                    bx.set(j, iv);
                }
            }
        }
        bx
    }

    /// Reached leaves of `tree`, each with `None` when all its rows enter the
    /// pool or `Some(rows)` for the rows that do. `cell` comes from [`Self::fixed_cells`].
    pub fn pool_blocks(&self, forest: &Forest<T>, tree: &Tree<T>, cell: &Hyperrectangle<T>) -> Vec<(usize, Option<Vec<usize>>)> {
        let bx = self.pool_box(cell);
        let data = forest.train_data();
        self.reached_leaves(tree)
            .into_iter()
            .map(|l| {
                let leaf = tree.leaf(l);
                let loose: Vec<(usize, Interval<T>)> = bx
                    .iter()
                    .filter(|(j, iv)| !leaf.region.interval(*j).is_subset_of(iv))
                    .map(|(j, iv)| (j, *iv))
                    .collect();
                if loose.is_empty() {
                    (l, None)
                } else {
                    let rows = leaf
                        .rows
                        .iter()
                        .copied()
                        .filter(|&i| {
                            let row = data.row(i);
                            loose.iter().all(|(j, iv)| iv.contains(row[*j]))
                        })
                        .collect();
                    (l, Some(rows))
                }
            })
            .collect()
    }

    fn pool(&self, forest: &Forest<T>, tree: &Tree<T>, cell: &Hyperrectangle<T>) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .pool_blocks(forest, tree, cell)
            .into_iter()
            .flat_map(|(l, block)| block.unwrap_or_else(|| tree.leaf(l).rows.clone()))
            .collect();
        rows.sort_unstable();
        rows
    }

    /// The condition as a box (points become degenerate intervals).
    pub fn to_rect(&self) -> Hyperrectangle<T> {
        Hyperrectangle::from_intervals(self.constraints.iter().enumerate().filter_map(|(j, c)| match *c {
            Constraint::Free => None,
            Constraint::Point(v) => Some((j, Interval::point(v))),
            Constraint::Region(iv) => Some((j, iv)),
        }))
    }

    pub fn reached_leaves(&self, tree: &Tree<T>) -> Vec<usize> {
        let mut leaves = Vec::new();
        tree.reach(|j, t| self.constraints[j].route(t), &mut leaves);
        leaves
    }

    fn check(&self, forest: &Forest<T>) -> Result<()> {
        if self.constraints.len() != forest.n_features() {
            return Err(Error::InvalidParameter(format!(
                "condition covers {} features, forest has {}",
                self.constraints.len(),
                forest.n_features()
            )));
        }
        for (j, c) in self.constraints.iter().enumerate() {
            let ok = match *c {
                Constraint::Free => true,
                Constraint::Point(v) => !v.is_nan(),
                Constraint::Region(iv) => iv.lo <= iv.hi,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("invalid constraint on feature {j}")));
            }
        }
        Ok(())
    }
}

/// Pooled weights and the total pooled row count over trees.
pub fn regional_weights<T: Scalar>(forest: &Forest<T>, cond: &Condition<T>) -> Result<(WeightVector<T>, usize)> {
    cond.check(forest)?;
    let cells = cond.fixed_cells(forest);
    let pools: Vec<Vec<usize>> = forest
        .trees()
        .iter()
        .zip(&cells)
        .map(|(tree, cell)| cond.pool(forest, tree, cell))
        .collect();
    let used = pools.iter().filter(|p| !p.is_empty()).count();
    if used == 0 {
        return Err(Error::EmptySupport("no training row satisfies the condition".into()));
    }
    let mut w = WeightVector::new();
    let mut mass = 0;
    for pool in pools.iter().filter(|p| !p.is_empty()) {
        mass += pool.len();
        let share = T::one() / (T::of_usize(used) * T::of_usize(pool.len()));
        for &i in pool {
            w.add(i, share);
        }
    }
    Ok((w, mass))
}

/// Union over trees of the pooled rows, ascending.
pub fn pooled_rows<T: Scalar>(forest: &Forest<T>, cond: &Condition<T>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for (tree, cell) in forest.trees().iter().zip(cond.fixed_cells(forest)) {
        out.extend(cond.pool(forest, tree, &cell));
    }
    out
}

/// Probability and plausibility of a rule rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleEstimate<T> {
    pub crp: T,
    /// `mass / base_mass`.
    pub plausibility: T,
    /// Pooled rows with the rectangle imposed, summed over trees.
    pub mass: usize,
    /// Pooled rows without it.
    pub base_mass: usize,
}

impl<T: Scalar> RuleEstimate<T> {
    /// Plausibility measured against the training size instead of the conditional pool.
    pub fn plausibility_vs_n(&self, n_train: usize, n_trees: usize) -> T {
        T::lit(self.mass as f64 / (n_train * n_trees) as f64)
    }
}

/// Base condition of a rule with its fixed cells and pooled mass.
#[derive(Debug, Clone)]
pub struct RuleBase<T: Scalar> {
    base: Condition<T>,
    s: Vec<usize>,
    cells: Vec<Hyperrectangle<T>>,
    base_mass: usize,
}

impl<T: Scalar> Estimator<'_, T> {
    /// Per-tree `(pooled rows, hits)` under `cond`.
    pub fn regional_counts(&self, cond: &Condition<T>) -> Vec<(usize, usize)> {
        self.regional_counts_in(cond, &cond.fixed_cells(self.forest()))
    }

    /// [`Self::regional_counts`] with precomputed fixed cells.
    pub(crate) fn regional_counts_in(&self, cond: &Condition<T>, cells: &[Hyperrectangle<T>]) -> Vec<(usize, usize)> {
        self.forest()
            .trees()
            .iter()
            .zip(cells)
            .enumerate()
            .map(|(t, (tree, cell))| {
                cond.pool_blocks(self.forest(), tree, cell)
                    .into_iter()
                    .fold((0, 0), |(rows, hits), (l, block)| match block {
                        None => (rows + tree.leaf(l).rows.len(), hits + self.leaf_hits(t, l)),
                        Some(block) => (
                            rows + block.len(),
                            hits + block.iter().filter(|&&i| self.row_hit(i)).count(),
                        ),
                    })
            })
            .collect()
    }

    /// Target probability under `cond`.
    pub fn regional_probability(&self, cond: &Condition<T>) -> Result<T> {
        cond.check(self.forest())?;
        tree_average(&self.regional_counts(cond), "condition")
    }

    fn rule_base(&self, base: Condition<T>, s: &[usize]) -> Result<RuleBase<T>> {
        base.check(self.forest())?;
        let cells = base.fixed_cells(self.forest());
        let base_mass = self.regional_counts_in(&base, &cells).iter().map(|c| c.0).sum();
        Ok(RuleBase {
            base,
            s: s.to_vec(),
            cells,
            base_mass,
        })
    }

    /// Shared state for scoring many rectangles on `s` with the other features held at `x`.
    pub fn local_rule_base(&self, x: &[T], s: &[usize]) -> Result<RuleBase<T>> {
        let p = self.forest().n_features();
        let mut base = Condition::free(p);
        base.fix(x, &complement(s, p));
        self.rule_base(base, s)
    }

    /// Shared state for scoring many rectangles on `s` within the sub-population `r`.
    pub fn regional_rule_base(&self, r: &Hyperrectangle<T>, s: &[usize]) -> Result<RuleBase<T>> {
        let p = self.forest().n_features();
        let mut base = Condition::free(p);
        base.restrict_to(r, &complement(s, p));
        self.rule_base(base, s)
    }

    /// Scores `rect` against a precomputed base.
    pub fn rule_estimate(&self, base: &RuleBase<T>, rect: &Hyperrectangle<T>) -> Result<RuleEstimate<T>> {
        let mut with_rect = base.base.clone();
        with_rect.restrict_to(rect, &base.s);
        with_rect.check(self.forest())?;
        let adds_fixed = base.s.iter().any(|&j| with_rect.is_fixed(j));
        let counts = if adds_fixed {
            self.regional_counts(&with_rect)
        } else {
            self.regional_counts_in(&with_rect, &base.cells)
        };
        let crp = tree_average(&counts, "rule rectangle")?;
        let mass: usize = counts.iter().map(|c| c.0).sum();
        Ok(RuleEstimate {
            crp,
            plausibility: T::lit(mass as f64 / base.base_mass as f64),
            mass,
            base_mass: base.base_mass,
        })
    }

    /// Rule rectangle `rect` on `s` with the other features held at `x`.
    pub fn crp_local(&self, x: &[T], s: &[usize], rect: &Hyperrectangle<T>) -> Result<RuleEstimate<T>> {
        self.rule_estimate(&self.local_rule_base(x, s)?, rect)
    }

    /// Target probability when `s` is released inside the region `r`.
    pub fn cdp_rule(&self, r: &Hyperrectangle<T>, s: &[usize]) -> Result<T> {
        let p = self.forest().n_features();
        let mut cond = Condition::free(p);
        cond.restrict_to(r, &complement(s, p));
        self.regional_probability(&cond)
    }

    /// Rule rectangle `rect` on `s` for the sub-population `r` on the other features.
    pub fn crp_rule(&self, r: &Hyperrectangle<T>, s: &[usize], rect: &Hyperrectangle<T>) -> Result<RuleEstimate<T>> {
        self.rule_estimate(&self.regional_rule_base(r, s)?, rect)
    }
}

pub fn crp_local<T: Scalar>(
    forest: &Forest<T>,
    x: &[T],
    s: &[usize],
    rect: &Hyperrectangle<T>,
    target: &TargetSet<T>,
) -> Result<RuleEstimate<T>> {
    Estimator::new(forest, *target)?.crp_local(x, s, rect)
}

pub fn cdp_rule<T: Scalar>(forest: &Forest<T>, r: &Hyperrectangle<T>, s: &[usize], target: &TargetSet<T>) -> Result<T> {
    Estimator::new(forest, *target)?.cdp_rule(r, s)
}

pub fn crp_rule<T: Scalar>(
    forest: &Forest<T>,
    r: &Hyperrectangle<T>,
    s: &[usize],
    rect: &Hyperrectangle<T>,
    target: &TargetSet<T>,
) -> Result<RuleEstimate<T>> {
    Estimator::new(forest, *target)?.crp_rule(r, s, rect)
}
