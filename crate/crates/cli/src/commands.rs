//! The six subcommands. Each writes its outputs under `out` and returns a
//! plain-text summary for stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cfrules::evaluation::{
    instance_seed, stability, CostBins, Direction, InstanceOutcome, Status, DEFAULT_SIGMAS,
};
use cfrules::{
    sample_recourse, CounterfactualRule, Estimator, Forest, Hyperrectangle, IsolationForest, MinMaxScaler, Recourse,
    RuleScope, TargetSet, Task,
};
use log::warn;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::*;

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_jsonl(path: &Path, records: &[Value]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), n + 1))))
        .collect()
}

fn save_config(cfg: &RunConfig, name: &str) -> Result<(), CliError> {
    let text = format!("# fingerprint = {}\n{}", cfg.fingerprint(), cfg.to_text());
    write_text(&cfg.out_dir().join(name), &text)
}

/// Fraction of rows where `model` reproduces the stored response.
fn fit_quality(model: &Forest<f64>, ds: &cfrules::Dataset<f64>) -> Value {
    let n = ds.n_rows().max(1) as f64;
    match ds.task() {
        Task::Classification => {
            let hits = ds.rows().zip(ds.y()).filter(|(r, &y)| model.predict_outcome(r) == y).count();
            json!({ "accuracy": hits as f64 / n })
        }
        Task::Regression => {
            let sse: f64 = ds.rows().zip(ds.y()).map(|(r, &y)| (model.predict_outcome(r) - y).powi(2)).sum();
            json!({ "rmse": (sse / n).sqrt() })
        }
    }
}

pub fn train(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let fp = cfg.fingerprint();
    let (query, explainer) = match &data.train_predictions {
        None => {
            let query = Forest::train(&data.train, &query_params(cfg)?)?;
            let preds: Vec<f64> = data.train.rows().map(|r| query.predict_outcome(r)).collect();
            let relabelled = data.train.with_targets(data.train.target().clone(), preds)?;
            let explainer = Forest::train(&relabelled, &explainer_params(cfg)?)?;
            (query, explainer)
        }
        Some(preds) => {
            let explainer = Forest::train(preds, &explainer_params(cfg)?)?;
            (explainer.clone(), explainer)
        }
    };
    let iforest = IsolationForest::fit(&data.train, &iforest_params(cfg)?)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    write_text(&dir.join(QUERY_FILE), &wrap_model(&query.to_json()?, &fp)?)?;
    write_text(&dir.join(EXPLAINER_FILE), &wrap_model(&explainer.to_json()?, &fp)?)?;
    write_text(&dir.join(IFOREST_FILE), &wrap_model(&serde_json::to_string(&iforest)?, &fp)?)?;
    save_config(cfg, "train.conf")?;
    let test = data.full.subset(&data.test_ids);
    let query_preds: Vec<f64> = test.rows().map(|r| query.predict_outcome(r)).collect();
    let test_as_query = test.with_targets(test.target().clone(), query_preds)?;
    let summary = json!({
        "fingerprint": fp,
        "rows": { "train": data.train_ids.len(), "test": data.test_ids.len() },
        "features": data.full.n_features(),
        "query_model": { "trees": query.n_trees(), "train": fit_quality(&query, &data.train), "test": fit_quality(&query, &test) },
        "explainer": { "trees": explainer.n_trees(), "agreement_on_test": fit_quality(&explainer, &test_as_query) },
        "iforest": { "trees": iforest.n_trees(), "threshold": iforest.tau() },
    });
    write_json(&dir.join("train_summary.json"), &summary)?;
    Ok(format!("fingerprint {fp}\n{}", serde_json::to_string_pretty(&summary)?))
}

fn search_json(search: &cfrules::DivergentSearch<f64>, features: &[cfrules::FeatureSpec]) -> Value {
    json!({
        "found": search.found(),
        "sets": search.explanations.iter().map(|e| json!({ "S": feature_names(features, &e.features), "cdp": e.cdp })).collect::<Vec<_>>(),
        "best": search.best.as_ref().map(|e| json!({ "S": feature_names(features, &e.features), "cdp": e.cdp })),
        "candidates": feature_names(features, &search.candidates),
        "evaluated": search.evaluated,
    })
}

fn status_of(explanation: &cfrules::rules::Explanation<f64>) -> &'static str {
    if explanation.is_degenerate() {
        "degenerate"
    } else if explanation.best_rule().is_some() {
        "ok"
    } else {
        "no_rule"
    }
}

fn rule_row(out: &mut String, label: &str, status: &str, rule: Option<&CounterfactualRule<f64>>, features: &[cfrules::FeatureSpec]) {
    let (s, n, crp, pl) = match rule {
        Some(r) if !r.rectangles.is_empty() => (
            feature_names(features, &r.s).join(","),
            r.rectangles.len().to_string(),
            format!("{:.3}", r.rectangles[0].crp),
            format!("{:.3}", r.rectangles[0].plausibility),
        ),
        _ => ("-".into(), "0".into(), "-".into(), "-".into()),
    };
    let _ = writeln!(out, "{label:>10} {status:>10} {n:>6} {crp:>7} {pl:>7}  {s}");
}

const RULE_HEADER: &str = "  instance     status  rects     crp   plaus  S\n";

pub fn explain_local(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let ids = select_instances(cfg, &data)?;
    let features = data.full.features().to_vec();
    let spec = data.full.target().clone();
    let search = search_config(cfg, &features)?;
    let pi_c: f64 = cfg.get("pi_c")?;
    let fallback = cfg.flag("fallback")?;
    let fp = cfg.fingerprint();
    let targets = ids
        .iter()
        .map(|&id| resolve_target(cfg, &spec, models.query.predict_outcome(data.full.row(id))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut estimators: BTreeMap<String, Estimator<'_, f64>> = BTreeMap::new();
    for (t, _) in &targets {
        let key = serde_json::to_string(&t.to_json(&spec))?;
        if !estimators.contains_key(&key) {
            estimators.insert(key, Estimator::new(&models.explainer, *t)?);
        }
    }
    let results: Vec<(Value, String)> = ids
        .par_iter()
        .zip(&targets)
        .map(|(&id, (target, direction))| {
            let x = data.full.row(id);
            let key = serde_json::to_string(&target.to_json(&spec)).expect("target serializes");
            let est = &estimators[&key];
            let mut record = json!({
                "fingerprint": fp,
                "instance_id": id,
                "direction": direction.label(),
                "target": target.to_json(&spec),
                "pi": search.pi,
                "pi_c": pi_c,
            });
            let mut row = String::new();
            match est.explain_local(x, &search, pi_c, fallback) {
                Ok(e) => {
                    let status = status_of(&e);
                    let rule = e.best_rule();
                    record["status"] = json!(status);
                    record["search"] = search_json(&e.search, &features);
                    record["rule"] = rule.map_or(Value::Null, |r| r.to_json(&features, &spec));
                    rule_row(&mut row, &id.to_string(), status, rule, &features);
                }
                Err(err) => {
                    record["status"] = json!("error");
                    record["error"] = json!(err.to_string());
                    rule_row(&mut row, &id.to_string(), "error", None, &features);
                }
            }
            (record, row)
        })
        .collect();
    let path = cfg.output("rules", "rules.jsonl");
    write_jsonl(&path, &results.iter().map(|r| r.0.clone()).collect::<Vec<_>>())?;
    save_config(cfg, "explain-local.conf")?;
    let mut out = format!("fingerprint {fp}\npi {} pi_c {pi_c}\n{RULE_HEADER}", search.pi);
    for (_, row) in &results {
        out.push_str(row);
    }
    let _ = write!(out, "wrote {}", path.display());
    Ok(out)
}

fn load_region(cfg: &RunConfig, features: &[cfrules::FeatureSpec]) -> Result<Hyperrectangle<f64>, CliError> {
    let path = cfg.path("region")?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Query(format!("{}: {e}", path.display())))?;
    Hyperrectangle::from_named_json(&value, features).map_err(|e| CliError::Query(e.to_string()))
}

pub fn explain_regional(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let features = data.full.features().to_vec();
    let spec = data.full.target().clone();
    let region = load_region(cfg, &features)?;
    let members: Vec<&[f64]> = data.train.rows().filter(|r| region.contains(r)).collect();
    if members.is_empty() {
        return Err(CliError::Query("the region contains no training rows".into()));
    }
    // Binary default: the class opposite to the region's majority prediction.
    let ones = members.iter().filter(|r| models.query.predict_outcome(r) == 1.0).count();
    let majority = if 2 * ones > members.len() { 1.0 } else { 0.0 };
    let (target, direction) = resolve_target(cfg, &spec, majority)?;
    let search = search_config(cfg, &features)?;
    let pi_c: f64 = cfg.get("pi_c")?;
    let est = Estimator::new(&models.explainer, target)?;
    let e = est.explain_regional(&region, &search, pi_c, cfg.flag("fallback")?)?;
    let fp = cfg.fingerprint();
    let status = status_of(&e);
    let rule = e.best_rule();
    let record = json!({
        "fingerprint": fp,
        "region": region.to_named_json(&features),
        "region_rows": members.len(),
        "direction": direction.label(),
        "target": target.to_json(&spec),
        "pi": search.pi,
        "pi_c": pi_c,
        "status": status,
        "search": search_json(&e.search, &features),
        "rule": rule.map_or(Value::Null, |r| r.to_json(&features, &spec)),
    });
    let path = cfg.output("rules", "regional_rules.jsonl");
    write_jsonl(&path, &[record])?;
    save_config(cfg, "explain-regional.conf")?;
    let mut out = format!("fingerprint {fp}\npi {} pi_c {pi_c}\n{RULE_HEADER}", search.pi);
    rule_row(&mut out, "region", status, rule, &features);
    let _ = write!(out, "wrote {}", path.display());
    Ok(out)
}

pub fn sample(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let features = data.full.features().to_vec();
    let spec = data.full.target().clone();
    let annealing = annealing_config(cfg)?;
    let fp = cfg.fingerprint();
    let rules_path = cfg.output("rules", "rules.jsonl");
    let records = read_jsonl(&rules_path)?;
    let mut jobs = Vec::new();
    for rec in &records {
        let Some(rule_json) = rec.get("rule").filter(|r| !r.is_null()) else { continue };
        let rule = CounterfactualRule::<f64>::from_json(rule_json, &features, &spec)?;
        let RuleScope::Local { x } = &rule.scope else {
            warn!("skipping a regional rule: recourses need a query instance");
            continue;
        };
        if rule.rectangles.is_empty() {
            continue;
        }
        let id = rec
            .get("instance_id")
            .and_then(Value::as_u64)
            .ok_or_else(|| CliError::Data("rule record without instance_id".into()))? as usize;
        let direction = rec.get("direction").and_then(Value::as_str).unwrap_or("all").to_owned();
        jobs.push((id, direction, x.clone(), rule));
    }
    let path = cfg.output("recourses", "recourses.jsonl");
    if jobs.is_empty() {
        warn!("no local rule with a rectangle in {}; writing an empty recourse file", rules_path.display());
        write_jsonl(&path, &[])?;
        save_config(cfg, "sample.conf")?;
        return Ok(format!("fingerprint {fp}\nno rules to sample; wrote {}", path.display()));
    }
    let results: Vec<Result<Value, CliError>> = jobs
        .par_iter()
        .map(|(id, direction, x, rule)| {
            let ann = cfrules::AnnealingConfig { seed: instance_seed(annealing.seed, *id), ..annealing.clone() };
            let r: Recourse<f64> = sample_recourse(x, rule, &data.train, &models.iforest, &ann)?;
            if !rule.rectangles[r.rule_id].rect.contains(&r.x_cf) {
                return Err(CliError::Internal(format!("recourse for instance {id} left its rule rectangle")));
            }
            let changed: Vec<usize> = (0..x.len()).filter(|&j| x[j] != r.x_cf[j]).collect();
            Ok(json!({
                "fingerprint": fp,
                "instance_id": id,
                "direction": direction,
                "target": rule.target.to_json(&spec),
                "x_cf": r.x_cf,
                "changed_features": feature_names(&features, &changed),
                "energy": r.energy,
                "inlier": models.iforest.is_inlier(&r.x_cf),
                "accepted_by_model": models.query.predict_in(&r.x_cf, &rule.target),
                "rule_id": r.rule_id,
                "seed": r.seed,
            }))
        })
        .collect();
    let mut out_records = Vec::new();
    let mut table = format!("fingerprint {fp}\n  instance  changed  inlier  accepted\n");
    for r in results {
        let v = r?;
        let _ = writeln!(
            table,
            "{:>10} {:>8} {:>7} {:>9}",
            v["instance_id"].to_string(),
            v["changed_features"].as_array().map_or(0, Vec::len),
            v["inlier"].to_string(),
            v["accepted_by_model"].to_string()
        );
        out_records.push(v);
    }
    write_jsonl(&path, &out_records)?;
    save_config(cfg, "sample.conf")?;
    let _ = write!(table, "wrote {}", path.display());
    Ok(table)
}

struct Loaded {
    id: usize,
    direction: Direction,
    target: TargetSet<f64>,
    x_cf: Vec<f64>,
}

fn load_recourses(cfg: &RunConfig, spec: &cfrules::TargetSpec, n_rows: usize) -> Result<Vec<Loaded>, CliError> {
    let path = cfg.output("recourses", "recourses.jsonl");
    read_jsonl(&path)?
        .iter()
        .map(|v| {
            let id = v.get("instance_id").and_then(Value::as_u64).ok_or_else(|| CliError::Data("recourse without instance_id".into()))? as usize;
            if id >= n_rows {
                return Err(CliError::Query(format!("unknown instance id {id}")));
            }
            Ok(Loaded {
                id,
                direction: direction_from(v.get("direction").and_then(Value::as_str).unwrap_or("all"))?,
                target: TargetSet::from_json(v.get("target").unwrap_or(&Value::Null), spec)?,
                x_cf: serde_json::from_value(v.get("x_cf").cloned().unwrap_or(Value::Null))?,
            })
        })
        .collect()
}

fn as_recourse(l: &Loaded) -> Recourse<f64> {
    Recourse { x_cf: l.x_cf.clone(), changed: Vec::new(), energy: 0.0, rule_id: 0, seed: 0, accepted_by_model: None }
}

pub fn evaluate(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let spec = data.full.target().clone();
    let loaded = load_recourses(cfg, &spec, data.full.n_rows())?;
    let mut outcomes: BTreeMap<usize, InstanceOutcome<f64>> = BTreeMap::new();
    let rules_path = cfg.output("rules", "rules.jsonl");
    if rules_path.is_file() {
        for rec in read_jsonl(&rules_path)? {
            let Some(id) = rec.get("instance_id").and_then(Value::as_u64) else { continue };
            let id = id as usize;
            if id >= data.full.n_rows() {
                return Err(CliError::Query(format!("unknown instance id {id}")));
            }
            let status = match rec.get("status").and_then(Value::as_str) {
                Some("degenerate") => Status::Degenerate,
                Some("ok") => Status::Failed("no recourse sampled".into()),
                Some("error") => Status::Failed(rec.get("error").and_then(Value::as_str).unwrap_or("").to_owned()),
                _ => Status::NoRule,
            };
            outcomes.insert(
                id,
                InstanceOutcome {
                    id,
                    direction: direction_from(rec.get("direction").and_then(Value::as_str).unwrap_or("all"))?,
                    target: TargetSet::from_json(rec.get("target").unwrap_or(&Value::Null), &spec)?,
                    query: data.full.row(id).to_vec(),
                    status,
                    recourse: None,
                },
            );
        }
    }
    for l in &loaded {
        outcomes.insert(
            l.id,
            InstanceOutcome {
                id: l.id,
                direction: l.direction,
                target: l.target,
                query: data.full.row(l.id).to_vec(),
                status: Status::Ok,
                recourse: Some(as_recourse(l)),
            },
        );
    }
    if outcomes.is_empty() {
        return Err(CliError::Data("nothing to evaluate: no rules or recourses".into()));
    }
    let outcomes: Vec<InstanceOutcome<f64>> = outcomes.into_values().collect();
    let bins = CostBins::fit(&data.train, cfg.get("bins")?)?;
    let mut report = cfrules::summarize(&models.query, &models.iforest, &bins, &outcomes);
    let fp = cfg.fingerprint();
    report.fingerprint = Some(fp.clone());
    let table = report.to_table();
    write_json(&cfg.out_dir().join("report.json"), &serde_json::to_value(&report)?)?;
    write_text(&cfg.out_dir().join("report.txt"), &format!("fingerprint {fp}\n{table}"))?;
    save_config(cfg, "evaluate.conf")?;
    Ok(format!("fingerprint {fp}\n{table}"))
}

pub fn stability_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let spec = data.full.target().clone();
    let loaded = load_recourses(cfg, &spec, data.full.n_rows())?;
    let fp = cfg.fingerprint();
    let sigmas: Vec<f64> = if cfg.is_set("sigmas") { cfg.list("sigmas")? } else { DEFAULT_SIGMAS.to_vec() };
    if loaded.is_empty() {
        return Err(CliError::Data("no recourses to perturb".into()));
    }
    let actions: Vec<(Vec<f64>, Vec<f64>)> = loaded.iter().map(|l| (data.full.row(l.id).to_vec(), l.x_cf.clone())).collect();
    let scaler = MinMaxScaler::fit(&data.train);
    let n_categories: Vec<usize> = data.full.features().iter().map(|f| f.categories.len()).collect();
    let rows = stability(
        &models.query,
        |i| loaded[i].target,
        &actions,
        &scaler,
        &n_categories,
        &sigmas,
        cfg.get("trials")?,
        cfg.get("seed")?,
    )?;
    let value = json!({ "fingerprint": fp, "sigma_is_std": true, "rows": rows });
    let mut table = format!("{:<10}{:>20}\n", "sigma", "stability");
    for r in &rows {
        let _ = writeln!(table, "{:<10}{:>20}", r.sigma, format!("{:.2} ({}/{})", r.stability.value, r.stability.num, r.stability.den));
    }
    write_json(&cfg.out_dir().join("stability.json"), &value)?;
    write_text(&cfg.out_dir().join("stability.txt"), &format!("fingerprint {fp}\n{table}"))?;
    save_config(cfg, "stability.conf")?;
    Ok(format!("fingerprint {fp}\n{table}"))
}
