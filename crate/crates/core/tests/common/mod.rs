#![allow(dead_code)]

use std::path::PathBuf;

use cfrules::{load_csv, Dataset, FeatureSpec, Forest, ForestParams, NodeSpec, Schema, TargetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BLUE: usize = 0;
pub const GREEN: usize = 1;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load(name: &str) -> Dataset<f64> {
    let schema = Schema::load(data_dir().join(format!("{name}.schema.json"))).expect("schema");
    load_csv(
        data_dir().join(format!("{name}.csv")),
        &schema.features,
        schema.target.as_ref().expect("target"),
    )
    .expect("csv")
}

fn two_features() -> Vec<FeatureSpec> {
    vec![FeatureSpec::continuous("x0"), FeatureSpec::continuous("x1")]
}

/// Rows `(x0, x1, class)` spread evenly inside a box.
fn block(rows: &mut Vec<(f64, f64, usize)>, x0: (f64, f64), x1: (f64, f64), n: usize, class: usize) {
    for k in 0..n {
        let f = (k as f64 + 0.5) / n as f64;
        rows.push((x0.0 + f * (x0.1 - x0.0), x1.0 + (1.0 - f) * (x1.1 - x1.0), class));
    }
}

/// The query point of the two-feature partition: in the lowest middle cell, blue.
pub const TOY_X: [f64; 2] = [4.0, 1.0];

/// Single-tree partition of `[0, 8] x [0, 8]`.
///
/// `x0 <= 2` and `x0 > 6` are single leaves. The middle band is cut on
/// `x1` at 2, 4 and 6 into cells holding 5 blue, 5 green, 5 green and 12 blue
/// rows from bottom to top. Releasing `x1` from `TOY_X` reaches 10 green rows of 27.
pub fn toy_partition() -> Forest<f64> {
    let mut rows = Vec::new();
    rows.push((TOY_X[0], TOY_X[1], BLUE));
    block(&mut rows, (2.5, 5.5), (0.2, 1.8), 4, BLUE);
    block(&mut rows, (2.5, 5.5), (2.2, 3.8), 5, GREEN);
    block(&mut rows, (2.5, 5.5), (4.2, 5.8), 5, GREEN);
    block(&mut rows, (2.5, 5.5), (6.2, 7.8), 12, BLUE);
    block(&mut rows, (0.2, 1.8), (2.2, 7.8), 3, GREEN);
    block(&mut rows, (0.2, 1.8), (0.2, 1.8), 8, BLUE);
    block(&mut rows, (6.2, 7.8), (2.2, 7.8), 2, GREEN);
    block(&mut rows, (6.2, 7.8), (0.2, 1.8), 10, BLUE);
    let x = rows.iter().flat_map(|r| [r.0, r.1]).collect();
    let y = rows.iter().map(|r| r.2 as f64).collect();
    let ds = Dataset::new(two_features(), TargetSpec::classification("color", ["blue", "green"]), x, y).unwrap();
    let tree = vec![
        NodeSpec::split(0, 2.0, 1, 2),
        NodeSpec::Leaf,
        NodeSpec::split(0, 6.0, 3, 10),
        NodeSpec::split(1, 4.0, 4, 7),
        NodeSpec::split(1, 2.0, 5, 6),
        NodeSpec::Leaf,
        NodeSpec::Leaf,
        NodeSpec::split(1, 6.0, 8, 9),
        NodeSpec::Leaf,
        NodeSpec::Leaf,
        NodeSpec::Leaf,
    ];
    Forest::from_structure(ds, vec![tree]).unwrap()
}

/// Leaf value of the regression tree used by [`nested_tree`].
pub fn nested_tree_value(x0: f64, x1: f64) -> f64 {
    if x0 <= 1.0 {
        0.0
    } else if x0 > 2.0 {
        2.0
    } else if x1 > 2.9 {
        1.5
    } else if x1 > 1.0 {
        1.0
    } else {
        0.5
    }
}

/// Single regression tree over `X0 ~ U(0,3)`, `X1 ~ U(0,4)` whose output is
/// constant per leaf. Leaf values in preorder: 0, 0.5, 1, 1.5, 2.
pub fn nested_tree(n: usize, seed: u64) -> Forest<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..4.0));
        x.extend([a, b]);
        y.push(nested_tree_value(a, b));
    }
    let ds = Dataset::new(two_features(), TargetSpec::regression("y"), x, y).unwrap();
    let tree = vec![
        NodeSpec::split(0, 1.0, 1, 2),
        NodeSpec::Leaf,
        NodeSpec::split(0, 2.0, 3, 8),
        NodeSpec::split(1, 2.9, 4, 7),
        NodeSpec::split(1, 1.0, 5, 6),
        NodeSpec::Leaf,
        NodeSpec::Leaf,
        NodeSpec::Leaf,
        NodeSpec::Leaf,
    ];
    Forest::from_structure(ds, vec![tree]).unwrap()
}

/// Synthetic classification data on `p` features in `[0, 1]`; the label is
/// set by a noisy threshold on the sum of the first two features.
pub fn synthetic_classification(n: usize, p: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| (rng.gen_range(0.0..1.0f64) * 20.0).round() / 20.0).collect();
        let noise = rng.gen_range(-0.15..0.15);
        y.push(if row[0] + row[1] + noise > 1.0 { 1.0 } else { 0.0 });
        x.extend(row);
    }
    let features = (0..p).map(|j| FeatureSpec::continuous(format!("f{j}"))).collect();
    Dataset::new(features, TargetSpec::classification("label", ["neg", "pos"]), x, y).unwrap()
}

/// Synthetic regression data on `p` features in `[0, 1]`.
pub fn synthetic_regression(n: usize, p: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| (rng.gen_range(0.0..1.0f64) * 20.0).round() / 20.0).collect();
        y.push(2.0 * row[0] + row[1] * row[1] + rng.gen_range(-0.1..0.1));
        x.extend(row);
    }
    let features = (0..p).map(|j| FeatureSpec::continuous(format!("f{j}"))).collect();
    Dataset::new(features, TargetSpec::regression("y"), x, y).unwrap()
}

pub fn small_forest(ds: &Dataset<f64>, n_trees: usize, max_depth: usize, seed: u64) -> Forest<f64> {
    Forest::train(
        ds,
        &ForestParams {
            n_trees,
            max_depth,
            seed,
            ..ForestParams::default()
        },
    )
    .unwrap()
}
