//! CART random forest whose leaf partition backs every estimator in the crate.
//!
//! Trees are grown on (optionally bootstrapped) samples, then every training
//! row is routed once more so that each leaf lists all rows inside its region.
//! Leaf values are recomputed from those rows, which makes a prediction an
//! exact weighted average of training targets.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSpec, TargetSet, TargetSpec, Task};
use crate::error::{Error, Result};
use crate::rect::{Hyperrectangle, Interval};
use crate::scalar::Scalar;

pub const FORMAT_TAG: &str = "cfrules-forest";
pub const FORMAT_VERSION: u32 = 1;

/// Hyper-parameters. `None` fields resolve to task-dependent defaults at training time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: Option<usize>,
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 20,
            max_depth: 10,
            min_leaf: None,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved(&self, task: Task, p: usize) -> Self {
        let min_leaf = self.min_leaf.unwrap_or(match task {
            Task::Classification => 1,
            Task::Regression => 5,
        });
        let mtry = self.mtry.unwrap_or(match task {
            Task::Classification => (p as f64).sqrt().round() as usize,
            Task::Regression => p / 3,
        });
        Self {
            min_leaf: Some(min_leaf),
            mtry: Some(mtry.clamp(1, p)),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        if self.min_leaf == Some(0) {
            return Err(Error::InvalidParameter("min_leaf must be at least 1".into()));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidParameter("mtry must be at least 1".into()));
        }
        Ok(())
    }
}

/// Node of a tree, stored in preorder. `x[feature] <= threshold` goes left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf(usize),
}

/// Structural description of a node, used to assemble trees by hand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeSpec<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf,
}

impl<T> NodeSpec<T> {
    pub fn split(feature: usize, threshold: T, left: usize, right: usize) -> Self {
        Self::Split {
            feature,
            threshold,
            left,
            right,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Leaf<T> {
    /// Training rows inside the leaf region, ascending.
    pub rows: Vec<usize>,
    /// Class frequencies (classification) or a one-element mean (regression).
    pub value: Vec<T>,
    pub region: Hyperrectangle<T>,
    /// Index of the leaf in the node array.
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
    leaves: Vec<Leaf<T>>,
    row_leaf: Vec<usize>,
}

impl<T: Scalar> Tree<T> {
    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf<T>] {
        &self.leaves
    }

    pub fn leaf(&self, id: usize) -> &Leaf<T> {
        &self.leaves[id]
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf id of training row `i`.
    pub fn row_leaf(&self, i: usize) -> usize {
        self.row_leaf[i]
    }

    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                Node::Leaf(leaf) => return leaf,
            }
        }
    }

    /// Descends with a routing callback returning `(go_left, go_right)` for each split.
    /// Reached leaf ids are appended to `out` in left-to-right order.
    pub fn reach<F>(&self, mut route: F, out: &mut Vec<usize>)
    where
        F: FnMut(usize, T) -> (bool, bool),
    {
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, r) = route(feature, threshold);
                    if r {
                        stack.push(right);
                    }
                    if l {
                        stack.push(left);
                    }
                }
                Node::Leaf(leaf) => out.push(leaf),
            }
        }
    }

    /// Root-to-leaf feature sequences, one per leaf.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.leaves.len());
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            match self.nodes[id] {
                Node::Split {
                    feature, left, right, ..
                } => {
                    let mut next = path;
                    next.push(feature);
                    stack.push((right, next.clone()));
                    stack.push((left, next));
                }
                Node::Leaf(_) => out.push(path),
            }
        }
        out
    }

    fn n_splits(&self) -> usize {
        self.nodes.len() - self.leaves.len()
    }

    /// Builds leaves, regions and row lists from a node array and the training data.
    fn assemble(specs: &[NodeSpec<T>], train: &Dataset<T>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let p = train.n_features();
        let mut referenced = vec![false; specs.len()];
        referenced[0] = true;
        for (i, s) in specs.iter().enumerate() {
            if let NodeSpec::Split {
                feature,
                threshold,
                left,
                right,
            } = *s
            {
                if feature >= p || !threshold.is_finite() {
                    return Err(Error::Format(format!("node {i}: invalid split on feature {feature}")));
                }
                for c in [left, right] {
                    if c <= i || c >= specs.len() || referenced[c] {
                        return Err(Error::Format(format!("node {i}: bad child index {c}")));
                    }
                    referenced[c] = true;
                }
            }
        }
        if referenced.iter().any(|r| !r) {
            return Err(Error::Format("tree contains unreachable nodes".into()));
        }

        let mut nodes = Vec::with_capacity(specs.len());
        let mut regions = vec![Hyperrectangle::full(); specs.len()];
        let mut leaves = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            match *s {
                NodeSpec::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut l = regions[i].clone();
                    let mut r = regions[i].clone();
                    l.constrain(feature, Interval::at_most(threshold));
                    r.constrain(feature, Interval::above(threshold));
                    regions[left] = l;
                    regions[right] = r;
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    });
                }
                NodeSpec::Leaf => {
                    nodes.push(Node::Leaf(leaves.len()));
                    leaves.push(Leaf {
                        rows: Vec::new(),
                        value: Vec::new(),
                        region: std::mem::take(&mut regions[i]),
                        node: i,
                    });
                }
            }
        }
        let mut tree = Self {
            nodes,
            leaves,
            row_leaf: Vec::with_capacity(train.n_rows()),
        };
        for (i, row) in train.rows().enumerate() {
            let leaf = tree.leaf_index(row);
            tree.leaves[leaf].rows.push(i);
            tree.row_leaf.push(leaf);
        }
        for (id, leaf) in tree.leaves.iter_mut().enumerate() {
            if leaf.rows.is_empty() {
                return Err(Error::Training(format!("leaf {id} holds no training row")));
            }
            leaf.value = leaf_value(train, &leaf.rows);
        }
        Ok(tree)
    }
}

fn leaf_value<T: Scalar>(train: &Dataset<T>, rows: &[usize]) -> Vec<T> {
    let y = train.y();
    let n = T::of_usize(rows.len());
    match train.task() {
        Task::Regression => {
            let sum = rows.iter().fold(T::zero(), |acc, &i| acc + y[i]);
            vec![sum / n]
        }
        Task::Classification => {
            let mut counts = vec![0usize; train.n_classes()];
            for &i in rows {
                counts[y[i].to_usize().unwrap_or(0)] += 1;
            }
            counts.into_iter().map(|c| T::of_usize(c) / n).collect()
        }
    }
}

/// Sparse nonnegative weights over training rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightVector<T> {
    weights: BTreeMap<usize, T>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn new() -> Self {
        Self {
            weights: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, row: usize, w: T) {
        *self.weights.entry(row).or_insert_with(T::zero) += w;
    }

    pub fn get(&self, row: usize) -> T {
        self.weights.get(&row).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.weights.iter().map(|(&i, &w)| (i, w))
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> T {
        self.weights.values().fold(T::zero(), |a, &w| a + w)
    }

    /// `sum_i w_i * f(i)`.
    pub fn expect(&self, mut f: impl FnMut(usize) -> T) -> T {
        self.iter().fold(T::zero(), |acc, (i, w)| acc + w * f(i))
    }

    pub fn as_map(&self) -> &BTreeMap<usize, T> {
        &self.weights
    }
}

/// Per-row and per-leaf counts of training targets inside a target set.
#[derive(Clone, Debug)]
pub struct TargetCounts {
    pub row_hit: Vec<bool>,
    /// `leaf_hits[tree][leaf]`.
    pub leaf_hits: Vec<Vec<usize>>,
}

/// Trained ensemble together with the training table its leaves index into.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest<T> {
    train: Dataset<T>,
    params: ForestParams,
    trees: Vec<Tree<T>>,
}

impl<T: Scalar> Forest<T> {
    pub fn train(ds: &Dataset<T>, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        check_trainable(ds)?;
        let params = params.resolved(ds.task(), ds.n_features());
        let mut master = ChaCha8Rng::seed_from_u64(params.seed);
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let specs = grow_tree(ds, &params, s);
                Tree::assemble(&specs, ds)
            })
            .collect::<Result<Vec<_>>>()?;
        log::debug!("trained {} trees on {} rows", trees.len(), ds.n_rows());
        Ok(Self {
            train: ds.clone(),
            params,
            trees,
        })
    }

    /// Assembles a forest from hand-specified node arrays (preorder, root at 0).
    pub fn from_structure(train: Dataset<T>, trees: Vec<Vec<NodeSpec<T>>>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
        }
        let built = trees
            .iter()
            .map(|specs| Tree::assemble(specs, &train))
            .collect::<Result<Vec<_>>>()?;
        let params = ForestParams {
            n_trees: built.len(),
            bootstrap: false,
            ..ForestParams::default()
        }
        .resolved(train.task(), train.n_features());
        Ok(Self {
            train,
            params,
            trees: built,
        })
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn task(&self) -> Task {
        self.train.task()
    }

    pub fn train_data(&self) -> &Dataset<T> {
        &self.train
    }

    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        self.train.features()
    }

    pub fn target(&self) -> &TargetSpec {
        self.train.target()
    }

    /// Mean of per-tree leaf values: class probabilities, or a one-element mean.
    pub fn predict(&self, x: &[T]) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for tree in &self.trees {
            let v = &tree.leaf(tree.leaf_index(x)).value;
            if out.is_empty() {
                out = v.clone();
            } else {
                out.iter_mut().zip(v).for_each(|(o, &a)| *o += a);
            }
        }
        let k = T::of_usize(self.trees.len());
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    /// Arg-max class, lowest code on ties.
    pub fn predict_class(&self, x: &[T]) -> usize {
        argmax(&self.predict(x))
    }

    /// Predicted outcome in target units: class code or regression value.
    pub fn predict_outcome(&self, x: &[T]) -> T {
        match self.task() {
            Task::Classification => T::of_usize(self.predict_class(x)),
            Task::Regression => self.predict(x)[0],
        }
    }

    pub fn predict_in(&self, x: &[T], target: &TargetSet<T>) -> bool {
        target.contains(self.predict_outcome(x))
    }

    /// Each training row in x's leaf gets `1 / (k * |leaf|)`, summed over trees.
    pub fn point_weights(&self, x: &[T]) -> WeightVector<T> {
        let k = T::of_usize(self.trees.len());
        let mut w = WeightVector::new();
        for tree in &self.trees {
            let rows = &tree.leaf(tree.leaf_index(x)).rows;
            let share = T::one() / (k * T::of_usize(rows.len()));
            for &i in rows {
                w.add(i, share);
            }
        }
        w
    }

    /// Number of internal nodes splitting on each feature, indexed by feature.
    pub fn split_frequency(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_features()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }

    pub fn n_splits(&self) -> usize {
        self.trees.iter().map(Tree::n_splits).sum()
    }

    pub fn target_counts(&self, target: &TargetSet<T>) -> TargetCounts {
        let row_hit: Vec<bool> = self.train.y().iter().map(|&y| target.contains(y)).collect();
        let leaf_hits = self
            .trees
            .iter()
            .map(|t| {
                t.leaves
                    .iter()
                    .map(|l| l.rows.iter().filter(|&&i| row_hit[i]).count())
                    .collect()
            })
            .collect();
        TargetCounts { row_hit, leaf_hits }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDoc {
            format: FORMAT_TAG.to_owned(),
            version: FORMAT_VERSION,
            task: self.task(),
            seed: self.params.seed,
            params: self.params.clone(),
            features: self.train.features().to_vec(),
            target: self.train.target().clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeDoc {
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| match *n {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NodeDoc::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            Node::Leaf(id) => NodeDoc::Leaf {
                                value: t.leaves[id].value.clone(),
                                n_rows: t.leaves[id].rows.len(),
                            },
                        })
                        .collect(),
                })
                .collect(),
            train_x: self.train.matrix().to_vec(),
            train_y: self.train.y().to_vec(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let head: serde_json::Value = serde_json::from_str(text)?;
        let format = head.get("format").and_then(|v| v.as_str());
        let version = head.get("version").and_then(|v| v.as_u64());
        if format != Some(FORMAT_TAG) {
            return Err(Error::Format(format!("expected format `{FORMAT_TAG}`, found {format:?}")));
        }
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(Error::Format(format!(
                "unsupported version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        let doc: ForestDoc<T> = serde_json::from_value(head)?;
        if doc.task != doc.target.task {
            return Err(Error::Format("task does not match the target column".into()));
        }
        let train = Dataset::new(doc.features, doc.target, doc.train_x, doc.train_y)?;
        let mut trees = Vec::with_capacity(doc.trees.len());
        for td in doc.trees {
            let specs: Vec<NodeSpec<T>> = td
                .nodes
                .iter()
                .map(|n| match *n {
                    NodeDoc::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeSpec::split(feature, threshold, left, right),
                    NodeDoc::Leaf { .. } => NodeSpec::Leaf,
                })
                .collect();
            let mut tree = Tree::assemble(&specs, &train)?;
            let stored = td.nodes.into_iter().filter_map(|n| match n {
                NodeDoc::Leaf { value, n_rows } => Some((value, n_rows)),
                NodeDoc::Split { .. } => None,
            });
            for (leaf, (value, n_rows)) in tree.leaves.iter_mut().zip(stored) {
                if leaf.rows.len() != n_rows {
                    return Err(Error::Format("leaf row counts do not match the stored training data".into()));
                }
                leaf.value = value;
            }
            trees.push(tree);
        }
        if trees.is_empty() {
            return Err(Error::Format("forest has no trees".into()));
        }
        Ok(Self {
            train,
            params: doc.params,
            trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &a) in v.iter().enumerate() {
        if a > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ForestDoc<T> {
    format: String,
    version: u32,
    task: Task,
    seed: u64,
    params: ForestParams,
    features: Vec<FeatureSpec>,
    target: TargetSpec,
    trees: Vec<TreeDoc<T>>,
    train_x: Vec<T>,
    train_y: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct TreeDoc<T> {
    nodes: Vec<NodeDoc<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "lowercase")]
enum NodeDoc<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<T>,
        n_rows: usize,
    },
}

fn check_trainable<T: Scalar>(ds: &Dataset<T>) -> Result<()> {
    let y = ds.y();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Training(match ds.task() {
            Task::Classification => "only one class present in the training target".into(),
            Task::Regression => "training target is constant".into(),
        }));
    }
    Ok(())
}

struct Grower<'a, T> {
    ds: &'a Dataset<T>,
    y: Vec<f64>,
    n_classes: usize,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<NodeSpec<T>>,
}

struct BestSplit<T> {
    score: f64,
    feature: usize,
    threshold: T,
}

fn grow_tree<T: Scalar>(ds: &Dataset<T>, params: &ForestParams, seed: u64) -> Vec<NodeSpec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ds.n_rows();
    let sample: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut g = Grower {
        ds,
        y: ds.y().iter().map(|v| v.as_f64()).collect(),
        n_classes: ds.n_classes(),
        max_depth: params.max_depth,
        min_leaf: params.min_leaf.unwrap_or(1),
        mtry: params.mtry.unwrap_or(1),
        rng,
        nodes: Vec::new(),
    };
    g.grow(sample, 0);
    g.nodes
}

impl<T: Scalar> Grower<'_, T> {
    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(NodeSpec::Leaf);
        if depth >= self.max_depth || sample.len() < 2 * self.min_leaf || self.is_pure(&sample) {
            return id;
        }
        let Some(best) = self.best_split(&sample) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.ds.value(i, best.feature) <= best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = NodeSpec::split(best.feature, best.threshold, l, r);
        id
    }

    fn is_pure(&self, sample: &[usize]) -> bool {
        let first = self.y[sample[0]];
        sample.iter().all(|&i| self.y[i] == first)
    }

    /// Parent score: sum of squared class counts over n, or squared sum over n.
    fn node_score(&self, sample: &[usize]) -> f64 {
        let n = sample.len() as f64;
        if self.n_classes > 0 {
            let mut counts = vec![0f64; self.n_classes];
            for &i in sample {
                counts[self.y[i] as usize] += 1.0;
            }
            counts.iter().map(|c| c * c).sum::<f64>() / n
        } else {
            let s: f64 = sample.iter().map(|&i| self.y[i]).sum();
            s * s / n
        }
    }

    fn best_split(&mut self, sample: &[usize]) -> Option<BestSplit<T>> {
        let p = self.ds.n_features();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut self.rng);

        // Visit features in random order until `mtry` non-constant ones are seen.
        let mut chosen = Vec::with_capacity(self.mtry);
        let mut columns: BTreeMap<usize, Vec<(T, usize)>> = BTreeMap::new();
        for j in order {
            if chosen.len() == self.mtry {
                break;
            }
            let mut col: Vec<(T, usize)> = sample.iter().map(|&i| (self.ds.value(i, j), i)).collect();
            col.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            if col[0].0 < col[col.len() - 1].0 {
                chosen.push(j);
                columns.insert(j, col);
            }
        }

        let parent = self.node_score(sample);
        let mut best: Option<BestSplit<T>> = None;
        for (&j, col) in &columns {
            if let Some((score, threshold)) = self.scan(col) {
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score,
                };
                if better {
                    best = Some(BestSplit {
                        score,
                        feature: j,
                        threshold,
                    });
                }
            }
        }
        best.filter(|b| b.score > parent * (1.0 + 1e-12))
    }

    /// Best threshold on one sorted column: maximises the child score sum.
    fn scan(&self, col: &[(T, usize)]) -> Option<(f64, T)> {
        let n = col.len();
        let min_leaf = self.min_leaf;
        let mut best: Option<(f64, T)> = None;
        let classify = self.n_classes > 0;
        let mut left_counts = vec![0f64; self.n_classes];
        let mut right_counts = vec![0f64; self.n_classes];
        let (mut left_sq, mut right_sq) = (0f64, 0f64);
        let (mut left_sum, mut right_sum) = (0f64, 0f64);
        if classify {
            for &(_, i) in col {
                right_counts[self.y[i] as usize] += 1.0;
            }
            right_sq = right_counts.iter().map(|c| c * c).sum();
        } else {
            right_sum = col.iter().map(|&(_, i)| self.y[i]).sum();
        }
        for k in 0..n - 1 {
            let y = self.y[col[k].1];
            if classify {
                let c = y as usize;
                left_sq += 2.0 * left_counts[c] + 1.0;
                left_counts[c] += 1.0;
                right_sq -= 2.0 * right_counts[c] - 1.0;
                right_counts[c] -= 1.0;
            } else {
                left_sum += y;
                right_sum -= y;
            }
            let (a, b) = (col[k].0, col[k + 1].0);
            let nl = k + 1;
            if a == b || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let (nl, nr) = (nl as f64, (n - nl) as f64);
            let score = if classify {
                left_sq / nl + right_sq / nr
            } else {
                left_sum * left_sum / nl + right_sum * right_sum / nr
            };
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, midpoint(a, b)));
            }
        }
        best
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `b`.
fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let two = T::one() + T::one();
    let m = a / two + b / two;
    if m >= b || m < a {
        a
    } else {
        m
    }
}
