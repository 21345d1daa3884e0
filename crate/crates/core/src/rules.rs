//! Counterfactual rules: unions of disjoint boxes over a feature set `S`,
//! assembled from forest leaves that pass a probability threshold.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::data::{FeatureKind, FeatureSpec, TargetSet, TargetSpec};
use crate::divergent::{SearchConfig, DivergentSearch};
use crate::error::{Error, Result};
use crate::estimator::{complement, Estimator};
use crate::forest::Forest;
use crate::projected::projected_cells;
use crate::rect::{Hyperrectangle, Interval};
use crate::regional::{pooled_rows, Condition, RuleEstimate};
use crate::scalar::Scalar;

pub const DEFAULT_PI_C: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub enum RuleScope<T> {
    Local { x: Vec<T> },
    Regional { region: Hyperrectangle<T> },
}

/// One box of a rule with its estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleRect<T> {
    pub rect: Hyperrectangle<T>,
    pub crp: T,
    pub plausibility: T,
}

impl<T: Scalar> RuleRect<T> {
    fn new(rect: Hyperrectangle<T>, est: RuleEstimate<T>) -> Self {
        Self {
            rect,
            crp: est.crp,
            plausibility: est.plausibility,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleDiagnostics<T> {
    pub candidates: usize,
    pub possible: usize,
    /// Highest-probability candidate, useful when no leaf qualifies.
    pub best_candidate: Option<RuleRect<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualRule<T> {
    pub scope: RuleScope<T>,
    pub s: Vec<usize>,
    /// Pairwise disjoint, ordered by plausibility (descending).
    pub rectangles: Vec<RuleRect<T>>,
    pub target: TargetSet<T>,
    pub pi_c: T,
    /// The instance or region already reaches the target; no rectangle is produced.
    pub degenerate: bool,
    pub diagnostics: RuleDiagnostics<T>,
}

impl<T: Scalar> CounterfactualRule<T> {
    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    /// Largest `crp * plausibility` over the rectangles (zero when empty).
    pub fn score(&self) -> T {
        self.rectangles
            .iter()
            .map(|r| r.crp * r.plausibility)
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn to_json(&self, features: &[FeatureSpec], target: &TargetSpec) -> Value {
        let name = |j: usize| features.get(j).map(|f| f.name.clone()).unwrap_or_else(|| format!("x{j}"));
        let mut out = Map::new();
        match &self.scope {
            RuleScope::Local { x } => {
                out.insert("scope".into(), json!("local"));
                out.insert("x".into(), json!(x));
            }
            RuleScope::Regional { region } => {
                out.insert("scope".into(), json!("regional"));
                out.insert("region".into(), region.to_named_json(features));
            }
        }
        out.insert("S".into(), json!(self.s.iter().map(|&j| name(j)).collect::<Vec<_>>()));
        out.insert(
            "rectangles".into(),
            Value::Array(self.rectangles.iter().map(|r| r.rect.to_named_json(features)).collect()),
        );
        let categories: Vec<Value> = self
            .rectangles
            .iter()
            .map(|r| category_sets(&r.rect, features))
            .collect();
        if categories.iter().any(|c| c.as_object().is_some_and(|m| !m.is_empty())) {
            out.insert("categories".into(), Value::Array(categories));
        }
        out.insert("crp".into(), json!(self.rectangles.iter().map(|r| r.crp).collect::<Vec<_>>()));
        out.insert(
            "plausibility".into(),
            json!(self.rectangles.iter().map(|r| r.plausibility).collect::<Vec<_>>()),
        );
        out.insert("target".into(), self.target.to_json(target));
        out.insert("pi_c".into(), json!(self.pi_c));
        out.insert("degenerate".into(), json!(self.degenerate));
        let d = &self.diagnostics;
        let mut diag = json!({ "candidates": d.candidates, "possible": d.possible });
        if let Some(b) = &d.best_candidate {
            diag["best_candidate"] = json!({
                "rectangle": b.rect.to_named_json(features),
                "crp": b.crp,
                "plausibility": b.plausibility,
            });
        }
        out.insert("diagnostics".into(), diag);
        Value::Object(out)
    }

    pub fn from_json(value: &Value, features: &[FeatureSpec], target: &TargetSpec) -> Result<Self> {
        let field = |k: &str| value.get(k).ok_or_else(|| Error::Format(format!("rule is missing `{k}`")));
        let scope = match field("scope")?.as_str() {
            Some("local") => RuleScope::Local {
                x: serde_json::from_value(field("x")?.clone())?,
            },
            Some("regional") => RuleScope::Regional {
                region: Hyperrectangle::from_named_json(field("region")?, features)?,
            },
            other => return Err(Error::Format(format!("unknown rule scope {other:?}"))),
        };
        let names: Vec<String> = serde_json::from_value(field("S")?.clone())?;
        let s = names
            .iter()
            .map(|n| {
                features
                    .iter()
                    .position(|f| &f.name == n)
                    .ok_or_else(|| Error::Format(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rects = field("rectangles")?
            .as_array()
            .ok_or_else(|| Error::Format("`rectangles` must be an array".into()))?;
        let crp: Vec<T> = serde_json::from_value(field("crp")?.clone())?;
        let plaus: Vec<T> = serde_json::from_value(field("plausibility")?.clone())?;
        if crp.len() != rects.len() || plaus.len() != rects.len() {
            return Err(Error::Format("rectangle estimates do not align".into()));
        }
        let rectangles = rects
            .iter()
            .zip(crp.into_iter().zip(plaus))
            .map(|(r, (crp, plausibility))| {
                Ok(RuleRect {
                    rect: Hyperrectangle::from_named_json(r, features)?,
                    crp,
                    plausibility,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scope,
            s,
            rectangles,
            target: TargetSet::from_json(field("target")?, target)?,
            pi_c: serde_json::from_value(field("pi_c")?.clone())?,
            degenerate: value.get("degenerate").and_then(Value::as_bool).unwrap_or(false),
            diagnostics: RuleDiagnostics {
                candidates: 0,
                possible: 0,
                best_candidate: None,
            },
        })
    }
}

/// Category names admitted by the categorical dimensions of `rect`.
pub fn category_sets<T: Scalar>(rect: &Hyperrectangle<T>, features: &[FeatureSpec]) -> Value {
    let mut out = Map::new();
    for (j, iv) in rect.iter() {
        let Some(f) = features.get(j) else { continue };
        if f.kind != FeatureKind::Categorical {
            continue;
        }
        let names: Vec<&str> = f
            .categories
            .iter()
            .enumerate()
            .filter(|(c, _)| iv.contains(T::of_usize(*c)))
            .map(|(_, n)| n.as_str())
            .collect();
        out.insert(f.name.clone(), json!(names));
    }
    Value::Object(out)
}

/// S-projections of the leaves holding any support row, from every tree, deduplicated.
pub fn candidate_leaves<T: Scalar>(forest: &Forest<T>, support: &BTreeSet<usize>, s: &[usize]) -> Vec<Hyperrectangle<T>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tree in forest.trees() {
        let leaves: BTreeSet<usize> = support.iter().map(|&i| tree.row_leaf(i)).collect();
        for l in leaves {
            let rect = tree.leaf(l).region.project(s);
            if seen.insert(rect.key()) {
                out.push(rect);
            }
        }
    }
    out
}

/// Merges boxes that agree on all but one dimension and touch on it, until no merge applies.
pub fn merge_rectangles<T: Scalar>(rects: &[Hyperrectangle<T>]) -> Vec<Hyperrectangle<T>> {
    let dims: BTreeSet<usize> = rects.iter().flat_map(|r| r.support().collect::<Vec<_>>()).collect();
    let mut current: Vec<Hyperrectangle<T>> = dedup(rects.to_vec());
    loop {
        let mut changed = false;
        for &d in &dims {
            let mut groups: BTreeMap<Vec<(usize, u64, u64)>, Vec<Interval<T>>> = BTreeMap::new();
            for r in &current {
                let key = dims
                    .iter()
                    .filter(|&&j| j != d)
                    .map(|&j| {
                        let (lo, hi) = r.interval(j).key();
                        (j, lo, hi)
                    })
                    .collect();
                groups.entry(key).or_default().push(r.interval(d));
            }
            let mut next = Vec::with_capacity(current.len());
            for (key, mut ivs) in groups {
                ivs.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap().then(a.hi.partial_cmp(&b.hi).unwrap()));
                let mut merged: Vec<Interval<T>> = Vec::new();
                for iv in ivs {
                    match merged.last_mut() {
                        Some(last) if last.touches(&iv) => *last = last.hull(&iv),
                        _ => merged.push(iv),
                    }
                }
                let template = rect_from_key::<T>(&key);
                for iv in merged {
                    let mut r = template.clone();
                    r.set(d, iv);
                    next.push(r);
                }
            }
            let next = dedup(next);
            changed |= next.len() < current.len();
            current = next;
        }
        if !changed {
            break;
        }
    }
    current
}

fn rect_from_key<T: Scalar>(key: &[(usize, u64, u64)]) -> Hyperrectangle<T> {
    Hyperrectangle::from_intervals(key.iter().map(|&(j, lo, hi)| {
        (
            j,
            Interval {
                lo: T::lit(f64::from_bits(lo)),
                hi: T::lit(f64::from_bits(hi)),
            },
        )
    }))
}

fn dedup<T: Scalar>(rects: Vec<Hyperrectangle<T>>) -> Vec<Hyperrectangle<T>> {
    let mut by_key = BTreeMap::new();
    for r in rects {
        by_key.entry(r.key()).or_insert(r);
    }
    by_key.into_values().collect()
}

/// Keeps rectangles greedily by plausibility, then probability, dropping any that overlaps a kept one.
fn select_disjoint<T: Scalar>(mut rects: Vec<RuleRect<T>>) -> Vec<RuleRect<T>> {
    rects.sort_by(|a, b| {
        b.plausibility
            .partial_cmp(&a.plausibility)
            .unwrap()
            .then(b.crp.partial_cmp(&a.crp).unwrap())
            .then(a.rect.key().cmp(&b.rect.key()))
    });
    let mut kept: Vec<RuleRect<T>> = Vec::new();
    for r in rects {
        if kept.iter().all(|k| !k.rect.overlaps(&r.rect)) {
            kept.push(r);
        }
    }
    kept
}

/// Shared filter / merge / verify / select pipeline.
fn assemble<T, F>(candidates: Vec<Hyperrectangle<T>>, pi_c: T, estimate: F) -> Result<(Vec<RuleRect<T>>, RuleDiagnostics<T>)>
where
    T: Scalar,
    F: Fn(&Hyperrectangle<T>) -> Result<RuleEstimate<T>> + Sync,
{
    let scored: Vec<RuleRect<T>> = candidates
        .par_iter()
        .map(|r| estimate(r).map(|e| RuleRect::new(r.clone(), e)))
        .collect::<Result<_>>()?;
    let best_candidate = scored
        .iter()
        .max_by(|a, b| a.crp.partial_cmp(&b.crp).unwrap().then(b.rect.key().cmp(&a.rect.key())))
        .cloned();
    let possible: Vec<RuleRect<T>> = scored.into_iter().filter(|r| r.crp >= pi_c).collect();
    let diagnostics = RuleDiagnostics {
        candidates: candidates.len(),
        possible: possible.len(),
        best_candidate,
    };
    if possible.is_empty() {
        return Ok((Vec::new(), diagnostics));
    }
    let boxes: Vec<Hyperrectangle<T>> = possible.iter().map(|r| r.rect.clone()).collect();
    let merged = merge_rectangles(&boxes);
    let verified: Vec<Vec<RuleRect<T>>> = merged
        .par_iter()
        .map(|m| -> Result<Vec<RuleRect<T>>> {
            if let Some(orig) = possible.iter().find(|p| p.rect == *m) {
                return Ok(vec![orig.clone()]);
            }
            let e = estimate(m)?;
            if e.crp >= pi_c {
                Ok(vec![RuleRect::new(m.clone(), e)])
            } else {
                Ok(possible.iter().filter(|p| p.rect.is_subset_of(m)).cloned().collect())
            }
        })
        .collect::<Result<_>>()?;
    let rects = select_disjoint(verified.into_iter().flatten().collect());
    Ok((rects, diagnostics))
}

fn validate_pi_c<T: Scalar>(pi_c: T) -> Result<()> {
    if pi_c > T::zero() && pi_c <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pi_c must lie in (0, 1], got {pi_c}")))
    }
}

impl<T: Scalar> Estimator<'_, T> {
    pub fn build_local_rule(&self, x: &[T], s: &[usize], pi_c: T) -> Result<CounterfactualRule<T>> {
        validate_pi_c(pi_c)?;
        let forest = self.forest();
        let mut rule = CounterfactualRule {
            scope: RuleScope::Local { x: x.to_vec() },
            s: s.to_vec(),
            rectangles: Vec::new(),
            target: *self.target(),
            pi_c,
            degenerate: false,
            diagnostics: RuleDiagnostics {
                candidates: 0,
                possible: 0,
                best_candidate: None,
            },
        };
        if forest.predict_in(x, self.target()) {
            rule.degenerate = true;
            return Ok(rule);
        }
        let cond = complement(s, forest.n_features());
        let support: BTreeSet<usize> = projected_cells(forest, &cond, x)
            .into_iter()
            .flat_map(|c| c.members)
            .collect();
        let candidates = candidate_leaves(forest, &support, s);
        let base = self.local_rule_base(x, s)?;
        let (rects, diagnostics) = assemble(candidates, pi_c, |r| self.rule_estimate(&base, r))?;
        rule.rectangles = rects;
        rule.diagnostics = diagnostics;
        Ok(rule)
    }

    pub fn build_regional_rule(&self, region: &Hyperrectangle<T>, s: &[usize], pi_c: T) -> Result<CounterfactualRule<T>> {
        validate_pi_c(pi_c)?;
        let forest = self.forest();
        let p = forest.n_features();
        let mut rule = CounterfactualRule {
            scope: RuleScope::Regional { region: region.clone() },
            s: s.to_vec(),
            rectangles: Vec::new(),
            target: *self.target(),
            pi_c,
            degenerate: false,
            diagnostics: RuleDiagnostics {
                candidates: 0,
                possible: 0,
                best_candidate: None,
            },
        };
        if self.regional_probability(&Condition::from_rect(p, region))? >= pi_c {
            rule.degenerate = true;
            return Ok(rule);
        }
        let mut cond = Condition::free(p);
        cond.restrict_to(region, &complement(s, p));
        let support = pooled_rows(forest, &cond);
        let candidates = candidate_leaves(forest, &support, s);
        let base = self.regional_rule_base(region, s)?;
        let (rects, diagnostics) = assemble(candidates, pi_c, |r| self.rule_estimate(&base, r))?;
        rule.rectangles = rects;
        rule.diagnostics = diagnostics;
        Ok(rule)
    }

    /// Divergent search followed by one local rule per minimal set, best score first.
    ///
    /// With `fallback`, a search that reaches no set falls back to its best-scoring set.
    pub fn explain_local(&self, x: &[T], cfg: &SearchConfig<T>, pi_c: T, fallback: bool) -> Result<Explanation<T>> {
        let search = self.minimal_divergent(x, cfg)?;
        let rules = self.rules_for(&search, fallback, |s| self.build_local_rule(x, s, pi_c))?;
        Ok(Explanation { search, rules })
    }

    pub fn explain_regional(
        &self,
        region: &Hyperrectangle<T>,
        cfg: &SearchConfig<T>,
        pi_c: T,
        fallback: bool,
    ) -> Result<Explanation<T>> {
        let search = self.minimal_divergent_rule(region, cfg)?;
        let rules = self.rules_for(&search, fallback, |s| self.build_regional_rule(region, s, pi_c))?;
        Ok(Explanation { search, rules })
    }

    fn rules_for<F>(&self, search: &DivergentSearch<T>, fallback: bool, build: F) -> Result<Vec<CounterfactualRule<T>>>
    where
        F: Fn(&[usize]) -> Result<CounterfactualRule<T>>,
    {
        let sets: Vec<&[usize]> = if search.found() {
            search.explanations.iter().map(|e| e.features.as_slice()).collect()
        } else if fallback {
            search.best.iter().map(|e| e.features.as_slice()).collect()
        } else {
            Vec::new()
        };
        let mut rules = sets.into_iter().map(build).collect::<Result<Vec<_>>>()?;
        rules.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap().then(a.s.cmp(&b.s)));
        Ok(rules)
    }
}

/// A divergent search together with the rules built from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation<T> {
    pub search: DivergentSearch<T>,
    pub rules: Vec<CounterfactualRule<T>>,
}

impl<T: Scalar> Explanation<T> {
    /// First rule with at least one rectangle.
    pub fn best_rule(&self) -> Option<&CounterfactualRule<T>> {
        self.rules.iter().find(|r| !r.is_empty())
    }

    pub fn is_degenerate(&self) -> bool {
        self.rules.iter().any(|r| r.degenerate)
    }
}

pub fn build_local_rule<T: Scalar>(
    forest: &Forest<T>,
    x: &[T],
    s: &[usize],
    target: &TargetSet<T>,
    pi_c: T,
) -> Result<CounterfactualRule<T>> {
    Estimator::new(forest, *target)?.build_local_rule(x, s, pi_c)
}

pub fn build_regional_rule<T: Scalar>(
    forest: &Forest<T>,
    region: &Hyperrectangle<T>,
    s: &[usize],
    target: &TargetSet<T>,
    pi_c: T,
) -> Result<CounterfactualRule<T>> {
    Estimator::new(forest, *target)?.build_regional_rule(region, s, pi_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(ivs: &[(usize, f64, f64)]) -> Hyperrectangle<f64> {
        Hyperrectangle::from_intervals(ivs.iter().map(|&(j, lo, hi)| (j, Interval::new(lo, hi).unwrap())))
    }

    #[test]
    fn adjacent_boxes_merge() {
        let a = boxed(&[(0, 0.0, 1.0), (1, 0.0, 1.0)]);
        let b = boxed(&[(0, 1.0, 2.0), (1, 0.0, 1.0)]);
        assert_eq!(merge_rectangles(&[a, b]), vec![boxed(&[(0, 0.0, 2.0), (1, 0.0, 1.0)])]);
    }

    #[test]
    fn split_sides_merge_back() {
        let left = Hyperrectangle::from_intervals([(0, Interval::at_most(1.0))]);
        let right = Hyperrectangle::from_intervals([(0, Interval::above(1.0))]);
        assert_eq!(merge_rectangles(&[left, right]), vec![Hyperrectangle::full()]);
    }

    #[test]
    fn gaps_are_preserved() {
        let a = boxed(&[(0, 0.0, 1.0), (1, 0.0, 1.0)]);
        let b = boxed(&[(0, 2.0, 3.0), (1, 0.0, 1.0)]);
        assert_eq!(merge_rectangles(&[a.clone(), b.clone()]).len(), 2);
    }

    #[test]
    fn merges_chain_across_dimensions() {
        // Four quadrants of the unit square collapse into one box.
        let q = |x0: f64, x1: f64| boxed(&[(0, x0, x0 + 0.5), (1, x1, x1 + 0.5)]);
        let out = merge_rectangles(&[q(0.0, 0.0), q(0.5, 0.0), q(0.0, 0.5), q(0.5, 0.5)]);
        assert_eq!(out, vec![boxed(&[(0, 0.0, 1.0), (1, 0.0, 1.0)])]);
    }

    #[test]
    fn disjoint_selection_prefers_plausible() {
        let mk = |lo: f64, hi: f64, p: f64| RuleRect {
            rect: boxed(&[(0, lo, hi)]),
            crp: 1.0,
            plausibility: p,
        };
        let kept = select_disjoint(vec![mk(0.0, 2.0, 0.3), mk(1.0, 3.0, 0.5), mk(4.0, 5.0, 0.1)]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].plausibility, 0.5);
        assert_eq!(kept[1].plausibility, 0.1);
    }
}
