//! Projected-forest traversal: conditional estimators that ignore every split
//! on a feature outside the conditioning set.

use crate::data::TargetSet;
use crate::error::Result;
use crate::estimator::{complement, tree_average, Estimator};
use crate::forest::{Forest, Tree, WeightVector};
use crate::rect::Hyperrectangle;
use crate::scalar::Scalar;

/// What one tree contributes to a projected estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedCell<T> {
    /// Leaves reached when splits outside the conditioning set are ignored.
    pub leaves: Vec<usize>,
    /// Intersection of the reached leaves' regions restricted to the conditioning set.
    pub region: Hyperrectangle<T>,
    /// Training rows whose conditioning coordinates lie in `region`, ascending.
    pub members: Vec<usize>,
}

fn reached_leaves<T: Scalar>(tree: &Tree<T>, cond: &[usize], x: &[T]) -> Vec<usize> {
    let mut leaves = Vec::new();
    tree.reach(
        |j, t| {
            if cond.contains(&j) {
                (x[j] <= t, x[j] > t)
            } else {
                (true, true)
            }
        },
        &mut leaves,
    );
    leaves
}

fn cell_region<T: Scalar>(tree: &Tree<T>, leaves: &[usize], cond: &[usize]) -> Hyperrectangle<T> {
    let mut region = Hyperrectangle::full();
    for &l in leaves {
        let proj = tree.leaf(l).region.project(cond);
        region = region
            .intersect(&proj)
            .expect("reached leaves all contain the query on the conditioning set");
    }
    region
}

/// Dimensions on which `region` is strictly tighter than `leaf_region`.
fn tighter_dims<T: Scalar>(region: &Hyperrectangle<T>, leaf_region: &Hyperrectangle<T>) -> Vec<usize> {
    region
        .iter()
        .filter(|(j, iv)| leaf_region.interval(*j) != **iv)
        .map(|(j, _)| j)
        .collect()
}

/// Visits the members of the projected cell leaf by leaf, reporting whether a
/// whole leaf qualifies (`None`) or the rows that do (`Some`).
fn for_each_member_block<T: Scalar>(
    forest: &Forest<T>,
    tree: &Tree<T>,
    leaves: &[usize],
    region: &Hyperrectangle<T>,
    mut visit: impl FnMut(usize, Option<Vec<usize>>),
) {
    let train = forest.train_data();
    for &l in leaves {
        let leaf = tree.leaf(l);
        let dims = tighter_dims(region, &leaf.region);
        if dims.is_empty() {
            visit(l, None);
        } else {
            let rows = leaf
                .rows
                .iter()
                .copied()
                .filter(|&i| {
                    let row = train.row(i);
                    dims.iter().all(|&j| region.interval(j).contains(row[j]))
                })
                .collect();
            visit(l, Some(rows));
        }
    }
}

/// One [`ProjectedCell`] per tree. Only the coordinates of `x` listed in `cond` are read.
pub fn projected_cells<T: Scalar>(forest: &Forest<T>, cond: &[usize], x: &[T]) -> Vec<ProjectedCell<T>> {
    forest
        .trees()
        .iter()
        .map(|tree| {
            let leaves = reached_leaves(tree, cond, x);
            let region = cell_region(tree, &leaves, cond);
            let mut members = Vec::new();
            for_each_member_block(forest, tree, &leaves, &region, |l, rows| match rows {
                None => members.extend_from_slice(&tree.leaf(l).rows),
                Some(rows) => members.extend(rows),
            });
            members.sort_unstable();
            ProjectedCell {
                leaves,
                region,
                members,
            }
        })
        .collect()
}

/// Projected-forest weights conditioning on `cond`. Trees with an empty cell are skipped.
pub fn projected_weights<T: Scalar>(forest: &Forest<T>, cond: &[usize], x: &[T]) -> WeightVector<T> {
    let cells = projected_cells(forest, cond, x);
    let used = cells.iter().filter(|c| !c.members.is_empty()).count();
    let mut w = WeightVector::new();
    for cell in cells.iter().filter(|c| !c.members.is_empty()) {
        let share = T::one() / (T::of_usize(used) * T::of_usize(cell.members.len()));
        for &i in &cell.members {
            w.add(i, share);
        }
    }
    w
}

impl<T: Scalar> Estimator<'_, T> {
    /// Per-tree `(members, hits)` of the projected cell conditioning on `cond`.
    pub fn projected_counts(&self, cond: &[usize], x: &[T]) -> Vec<(usize, usize)> {
        let forest = self.forest();
        forest
            .trees()
            .iter()
            .enumerate()
            .map(|(t, tree)| {
                let leaves = reached_leaves(tree, cond, x);
                let region = cell_region(tree, &leaves, cond);
                let (mut members, mut hits) = (0, 0);
                for_each_member_block(forest, tree, &leaves, &region, |l, rows| match rows {
                    None => {
                        members += tree.leaf(l).rows.len();
                        hits += self.leaf_hits(t, l);
                    }
                    Some(rows) => {
                        members += rows.len();
                        hits += rows.iter().filter(|&&i| self.row_hit(i)).count();
                    }
                });
                (members, hits)
            })
            .collect()
    }

    /// Probability of the target when the features in `s` are released and the rest held at `x`.
    pub fn cdp(&self, x: &[T], s: &[usize]) -> Result<T> {
        self.sdp(x, &complement(s, self.forest().n_features()))
    }

    /// Probability of the target given `X_s = x_s`.
    pub fn sdp(&self, x: &[T], s: &[usize]) -> Result<T> {
        tree_average(&self.projected_counts(s, x), "projected cell")
    }
}

/// Counterfactual decision probability of releasing `s` at `x`.
pub fn cdp<T: Scalar>(forest: &Forest<T>, x: &[T], s: &[usize], target: &TargetSet<T>) -> Result<T> {
    Estimator::new(forest, *target)?.cdp(x, s)
}

/// Same decision probability conditioning on `s`.
pub fn sdp<T: Scalar>(forest: &Forest<T>, x: &[T], s: &[usize], target: &TargetSet<T>) -> Result<T> {
    Estimator::new(forest, *target)?.sdp(x, s)
}
