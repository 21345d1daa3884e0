//! Data, model and parameter plumbing shared by the commands.

use std::path::Path;

use cfrules::divergent::SearchConfig;
use cfrules::evaluation::Direction;
use cfrules::{
    load_csv, split_indices, AnnealingConfig, Dataset, Forest, ForestParams, IsolationForest, IsolationParams, Schema,
    Strategy, TargetSet, TargetSpec, Task,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct Data {
    pub full: Dataset<f64>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub train: Dataset<f64>,
    /// External model predictions on the training rows, in `prediction_column` mode.
    pub train_predictions: Option<Dataset<f64>>,
}

fn existing(cfg: &RunConfig, key: &str) -> Result<std::path::PathBuf, CliError> {
    let path = cfg.path(key)?;
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Config(format!("`{key}`: {} does not exist", path.display())))
    }
}

fn target_spec(schema: &Schema) -> Result<&TargetSpec, CliError> {
    schema
        .target
        .as_ref()
        .ok_or_else(|| CliError::Data("schema declares no target column".into()))
}

pub fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    let schema = Schema::load(existing(cfg, "schema")?)?;
    let data_path = existing(cfg, "data")?;
    let target = target_spec(&schema)?.clone();
    let full: Dataset<f64> = load_csv(&data_path, &schema.features, &target)?;
    let (train_ids, test_ids) = split_indices(full.n_rows(), cfg.get("train_fraction")?, cfg.get("split_seed")?)?;
    let train = full.subset(&train_ids);
    let train_predictions = match cfg.raw("query_mode") {
        "labels" => None,
        "prediction_column" => {
            let column = cfg.path("prediction_column")?.to_string_lossy().into_owned();
            let spec = TargetSpec { name: column, ..full.target().clone() };
            let preds: Dataset<f64> = load_csv(&data_path, &schema.features, &spec)?;
            Some(preds.subset(&train_ids))
        }
        other => return Err(CliError::Config(format!("`query_mode`: expected labels or prediction_column, got `{other}`"))),
    };
    Ok(Data { full, train_ids, test_ids, train, train_predictions })
}

pub fn query_params(cfg: &RunConfig) -> Result<ForestParams, CliError> {
    Ok(ForestParams {
        n_trees: cfg.get("query_trees")?,
        max_depth: cfg.get("query_depth")?,
        bootstrap: cfg.flag("bootstrap")?,
        seed: cfg.get("seed")?,
        ..ForestParams::default()
    })
}

pub fn explainer_params(cfg: &RunConfig) -> Result<ForestParams, CliError> {
    Ok(ForestParams {
        n_trees: cfg.get("trees")?,
        max_depth: cfg.get("depth")?,
        min_leaf: cfg.optional("min_leaf")?,
        mtry: cfg.optional("mtry")?,
        bootstrap: cfg.flag("bootstrap")?,
        seed: cfg.get::<u64>("seed")?.wrapping_add(1),
    })
}

pub fn iforest_params(cfg: &RunConfig) -> Result<IsolationParams, CliError> {
    Ok(IsolationParams {
        n_trees: cfg.get("iforest_trees")?,
        contamination: cfg.get("contamination")?,
        seed: cfg.get::<u64>("seed")?.wrapping_add(2),
        ..IsolationParams::default()
    })
}

pub fn search_config(cfg: &RunConfig, features: &[cfrules::FeatureSpec]) -> Result<SearchConfig<f64>, CliError> {
    let strategy = match cfg.raw("strategy") {
        "exhaustive" => Strategy::Exhaustive,
        "path" | "path_sampled" => Strategy::PathSampled { m: cfg.get("path_m")?, seed: cfg.get("seed")? },
        other => return Err(CliError::Config(format!("`strategy`: expected exhaustive or path, got `{other}`"))),
    };
    let exclude = cfg
        .list::<String>("exclude")?
        .iter()
        .map(|name| {
            features
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| CliError::Config(format!("`exclude`: unknown feature `{name}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k: usize = cfg.get("k")?;
    if k > features.len() {
        log::info!("K = {k} exceeds the {} features; using {}", features.len(), features.len());
    }
    Ok(SearchConfig { pi: cfg.get("pi")?, k: k.min(features.len()), strategy, exclude })
}

pub fn annealing_config(cfg: &RunConfig) -> Result<AnnealingConfig, CliError> {
    let a = AnnealingConfig {
        max_iter: cfg.get("max_iter")?,
        t0: cfg.get("t0")?,
        cooling: cfg.get("cooling")?,
        seed: cfg.get("seed")?,
    };
    a.validate()?;
    Ok(a)
}

pub struct Models {
    pub query: Forest<f64>,
    pub explainer: Forest<f64>,
    pub iforest: IsolationForest<f64>,
}

pub const QUERY_FILE: &str = "query.json";
pub const EXPLAINER_FILE: &str = "explainer.json";
pub const IFOREST_FILE: &str = "iforest.json";

/// Model files wrap the serialized model with the fingerprint of the run that wrote it.
pub fn wrap_model(model_json: &str, fingerprint: &str) -> Result<String, CliError> {
    let model: Value = serde_json::from_str(model_json)?;
    Ok(serde_json::to_string(&json!({ "fingerprint": fingerprint, "model": model }))?)
}

fn unwrap_model(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e} (run `train` first?)", path.display())))?;
    let value: Value = serde_json::from_str(&text)?;
    let model = value
        .get("model")
        .ok_or_else(|| CliError::Data(format!("{}: not a model file", path.display())))?;
    Ok(model.to_string())
}

pub fn load_models(cfg: &RunConfig) -> Result<Models, CliError> {
    let dir = cfg.model_dir();
    Ok(Models {
        query: Forest::from_json(&unwrap_model(&dir.join(QUERY_FILE))?)?,
        explainer: Forest::from_json(&unwrap_model(&dir.join(EXPLAINER_FILE))?)?,
        iforest: serde_json::from_str(&unwrap_model(&dir.join(IFOREST_FILE))?)?,
    })
}

/// Dataset row ids selected by `instances` and `limit`.
pub fn select_instances(cfg: &RunConfig, data: &Data) -> Result<Vec<usize>, CliError> {
    let mut ids = match cfg.raw("instances") {
        "test" => data.test_ids.clone(),
        "train" => data.train_ids.clone(),
        "all" => (0..data.full.n_rows()).collect(),
        _ => {
            let ids: Vec<usize> = cfg
                .list::<usize>("instances")
                .map_err(|_| CliError::Query(format!("`instances`: expected test, train, all or row ids, got `{}`", cfg.raw("instances"))))?;
            if let Some(bad) = ids.iter().find(|&&i| i >= data.full.n_rows()) {
                return Err(CliError::Query(format!("unknown instance id {bad} (dataset has {} rows)", data.full.n_rows())));
            }
            ids
        }
    };
    let limit: usize = cfg.get("limit")?;
    if limit > 0 {
        ids.truncate(limit);
    }
    Ok(ids)
}

/// Target for a query the model labels `predicted`, with its class direction.
pub fn resolve_target(cfg: &RunConfig, spec: &TargetSpec, predicted: f64) -> Result<(TargetSet<f64>, Direction), CliError> {
    let binary = spec.task == Task::Classification && spec.classes.len() == 2;
    let direction = match (binary, predicted == 1.0) {
        (true, true) => Direction::Pos,
        (true, false) => Direction::Neg,
        _ => Direction::All,
    };
    if cfg.is_set("target") {
        let target = TargetSet::parse(cfg.raw("target"), spec).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((target, direction));
    }
    if binary {
        return Ok((TargetSet::Class(usize::from(predicted != 1.0)), direction));
    }
    Err(CliError::Config("`target` is required unless the task is binary classification".into()))
}

pub fn direction_from(label: &str) -> Result<Direction, CliError> {
    match label {
        "pos" => Ok(Direction::Pos),
        "neg" => Ok(Direction::Neg),
        "all" => Ok(Direction::All),
        other => Err(CliError::Data(format!("unknown direction `{other}`"))),
    }
}

pub fn feature_names(features: &[cfrules::FeatureSpec], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| features[j].name.clone()).collect()
}
