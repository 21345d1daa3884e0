//! Counterfactual rules from random forest partitions.
//!
//! A forest trained on a model's predictions supplies a partition of feature
//! space. Conditional estimators over that partition find the smallest feature
//! sets whose change can move the outcome into a target set, rules (boxes over
//! those features) that achieve it with high probability, and concrete recourses
//! sampled from the rules.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`). The crate root
//! re-exports `f64` aliases for the common case.

pub mod data;
pub mod divergent;
pub mod estimator;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod iforest;
pub mod projected;
pub mod recourse;
pub mod rect;
pub mod regional;
pub mod rules;
pub mod scalar;

pub use data::{load_csv, split, split_indices, Dataset, FeatureKind, FeatureSpec, MinMaxScaler, Schema, TargetSet, TargetSpec, Task};
pub use divergent::{minimal_divergent, minimal_divergent_rule, DivergentExplanation, DivergentSearch, Strategy};
pub use error::{Error, Result};
pub use estimator::Estimator;
pub use evaluation::{summarize, InstanceOutcome, LocalRunConfig, MetricReport};
pub use forest::{Forest, ForestParams, NodeSpec, WeightVector};
pub use iforest::{IsolationForest, IsolationParams};
pub use projected::{cdp, projected_weights, sdp};
pub use recourse::{l1_project, sample_recourse, AnnealingConfig, Recourse};
pub use rect::{Hyperrectangle, Interval};
pub use regional::{cdp_rule, crp_local, crp_rule, regional_weights, Condition, Constraint, RuleBase};
pub use rules::{build_local_rule, build_regional_rule, merge_rectangles, CounterfactualRule, RuleScope};
pub use scalar::Scalar;

/// Double-precision aliases.
pub type Dataset64 = Dataset<f64>;
pub type Forest64 = Forest<f64>;
pub type Rect64 = Hyperrectangle<f64>;
/// Single-precision aliases.
pub type Dataset32 = Dataset<f32>;
pub type Forest32 = Forest<f32>;
pub type Rect32 = Hyperrectangle<f32>;
