//! Closed intervals over the extended reals and axis-aligned hyperrectangles.
//!
//! Split routing sends `x <= t` left and `x > t` right. The right-hand side is
//! stored as the closed bound `[t.next_up(), ..]`, so every region in the crate
//! is a product of closed intervals and tree leaves of one tree stay disjoint.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::FeatureSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed interval `[lo, hi]`; either bound may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "interval bounds must satisfy lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self {
            lo: T::neg_infinity(),
            hi: T::infinity(),
        }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    /// `(-inf, t]`, the left side of a split.
    pub fn at_most(t: T) -> Self {
        Self {
            lo: T::neg_infinity(),
            hi: t,
        }
    }

    /// `(t, inf)`, the right side of a split.
    pub fn above(t: T) -> Self {
        Self {
            lo: t.next_up(),
            hi: T::infinity(),
        }
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == T::neg_infinity() && self.hi == T::infinity()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = if self.lo > other.lo { self.lo } else { other.lo };
        let hi = if self.hi < other.hi { self.hi } else { other.hi };
        (lo <= hi).then_some(Self { lo, hi })
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Overlapping, or separated by no representable value.
    pub fn touches(&self, other: &Self) -> bool {
        let reach = |iv: &Self| {
            if iv.hi == T::infinity() {
                iv.hi
            } else {
                iv.hi.next_up()
            }
        };
        self.lo <= reach(other) && other.lo <= reach(self)
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lo: if self.lo < other.lo { self.lo } else { other.lo },
            hi: if self.hi > other.hi { self.hi } else { other.hi },
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// Nearest point of the interval to `v`.
    pub fn clamp(&self, v: T) -> T {
        if v < self.lo {
            self.lo
        } else if v > self.hi {
            self.hi
        } else {
            v
        }
    }

    pub(crate) fn key(&self) -> (u64, u64) {
        (self.lo.as_f64().to_bits(), self.hi.as_f64().to_bits())
    }
}

impl<T: Scalar> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", bound_str(self.lo), bound_str(self.hi))
    }
}

fn bound_str<T: Scalar>(v: T) -> String {
    if v == T::infinity() {
        "inf".into()
    } else if v == T::neg_infinity() {
        "-inf".into()
    } else {
        v.to_string()
    }
}

pub(crate) fn bound_to_json<T: Scalar>(v: T) -> Value {
    if v == T::infinity() {
        Value::String("inf".into())
    } else if v == T::neg_infinity() {
        Value::String("-inf".into())
    } else {
        serde_json::to_value(v).unwrap_or(Value::Null)
    }
}

pub(crate) fn bound_from_json<T: Scalar>(v: &Value) -> Result<T> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .and_then(T::from_f64)
            .ok_or_else(|| Error::Format(format!("bound {n} not representable"))),
        Value::String(s) => match s.as_str() {
            "inf" | "+inf" => Ok(T::infinity()),
            "-inf" => Ok(T::neg_infinity()),
            other => Err(Error::Format(format!("unknown bound sentinel `{other}`"))),
        },
        other => Err(Error::Format(format!("expected a bound, got {other}"))),
    }
}

impl<T: Scalar> Serialize for Interval<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&bound_to_json(self.lo))?;
        seq.serialize_element(&bound_to_json(self.hi))?;
        seq.end()
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Interval<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct IntervalVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Scalar> Visitor<'de> for IntervalVisitor<T> {
            type Value = Interval<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a [lo, hi] pair")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let lo: Value = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let hi: Value = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let lo = bound_from_json(&lo).map_err(de::Error::custom)?;
                let hi = bound_from_json(&hi).map_err(de::Error::custom)?;
                Interval::new(lo, hi).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_seq(IntervalVisitor(std::marker::PhantomData))
    }
}

/// Axis-aligned box. Features outside the support are unconstrained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Hyperrectangle<T> {
    intervals: BTreeMap<usize, Interval<T>>,
}

impl<T: Scalar> Hyperrectangle<T> {
    /// The whole feature space.
    pub fn full() -> Self {
        Self {
            intervals: BTreeMap::new(),
        }
    }

    pub fn from_intervals(intervals: impl IntoIterator<Item = (usize, Interval<T>)>) -> Self {
        let mut rect = Self::full();
        for (j, iv) in intervals {
            rect.set(j, iv);
        }
        rect
    }

    /// Sets feature `j` to `iv`; a full interval removes `j` from the support.
    pub fn set(&mut self, j: usize, iv: Interval<T>) {
        if iv.is_full() {
            self.intervals.remove(&j);
        } else {
            self.intervals.insert(j, iv);
        }
    }

    /// Intersects feature `j` with `iv`. Returns false when the result is empty.
    pub fn constrain(&mut self, j: usize, iv: Interval<T>) -> bool {
        match self.interval(j).intersect(&iv) {
            Some(cut) => {
                self.set(j, cut);
                true
            }
            None => false,
        }
    }

    /// Interval on feature `j` (full when unconstrained).
    pub fn interval(&self, j: usize) -> Interval<T> {
        self.intervals.get(&j).copied().unwrap_or_else(Interval::full)
    }

    pub fn get(&self, j: usize) -> Option<&Interval<T>> {
        self.intervals.get(&j)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Interval<T>)> + '_ {
        self.intervals.iter().map(|(j, iv)| (*j, iv))
    }

    pub fn is_full(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Membership: every supported coordinate lies in its interval.
    pub fn contains(&self, x: &[T]) -> bool {
        self.intervals.iter().all(|(&j, iv)| iv.contains(x[j]))
    }

    /// Restriction to the features in `features`; everything else is released.
    pub fn project(&self, features: &[usize]) -> Self {
        Self {
            intervals: self
                .intervals
                .iter()
                .filter(|(j, _)| features.contains(j))
                .map(|(j, iv)| (*j, *iv))
                .collect(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let mut out = self.clone();
        for (j, iv) in other.iter() {
            if !out.constrain(j, *iv) {
                return None;
            }
        }
        Some(out)
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.intersect(other).is_some()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        other
            .iter()
            .all(|(j, iv)| self.interval(j).is_subset_of(iv))
    }

    /// Hashable identity of the box, exact on the bit patterns of its bounds.
    pub(crate) fn key(&self) -> Vec<(usize, u64, u64)> {
        self.intervals
            .iter()
            .map(|(j, iv)| {
                let (lo, hi) = iv.key();
                (*j, lo, hi)
            })
            .collect()
    }

    /// `{"feature": [lo, hi], ...}` keyed by feature name.
    pub fn to_named_json(&self, features: &[FeatureSpec]) -> Value {
        let mut map = Map::new();
        for (j, iv) in self.iter() {
            let name = features
                .get(j)
                .map(|f| f.name.clone())
                .unwrap_or_else(|| format!("x{j}"));
            map.insert(name, Value::Array(vec![bound_to_json(iv.lo), bound_to_json(iv.hi)]));
        }
        Value::Object(map)
    }

    pub fn from_named_json(value: &Value, features: &[FeatureSpec]) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::Format("hyperrectangle must be a JSON object".into()))?;
        let mut rect = Self::full();
        for (name, bounds) in map {
            let j = features
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| Error::Format(format!("unknown feature `{name}`")))?;
            let pair = bounds
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::Format(format!("`{name}` must map to [lo, hi]")))?;
            let iv = Interval::new(bound_from_json(&pair[0])?, bound_from_json(&pair[1])?)?;
            rect.set(j, iv);
        }
        Ok(rect)
    }
}

impl<T: Scalar> fmt::Display for Hyperrectangle<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> = self.iter().map(|(j, iv)| format!("x{j} in {iv}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(pairs: &[(usize, f64, f64)]) -> Hyperrectangle<f64> {
        Hyperrectangle::from_intervals(pairs.iter().map(|&(j, lo, hi)| (j, Interval::new(lo, hi).unwrap())))
    }

    #[test]
    fn empty_support_contains_everything() {
        let r = Hyperrectangle::<f64>::full();
        assert!(r.contains(&[1.0, -1e9, f64::MAX]));
    }

    #[test]
    fn closed_bounds_are_inclusive() {
        let r = rect(&[(1, 2.0, 3.0)]);
        assert!(r.contains(&[100.0, 2.0]));
        assert!(r.contains(&[100.0, 3.0]));
        assert!(!r.contains(&[100.0, 3.0f64.next_up()]));
    }

    #[test]
    fn membership_is_a_conjunction() {
        let r = rect(&[(0, 0.0, 1.0), (1, 0.0, 1.0)]);
        assert!(!r.contains(&[0.5, 2.0]));
        assert!(r.contains(&[0.5, 0.5]));
    }

    #[test]
    fn split_sides_are_disjoint_and_touching() {
        let l = Interval::at_most(2.5);
        let r = Interval::above(2.5);
        assert!(!l.overlaps(&r));
        assert!(l.touches(&r));
        assert!(l.contains(2.5) && !r.contains(2.5));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn named_json_uses_sentinels() {
        let features = vec![FeatureSpec::continuous("age"), FeatureSpec::continuous("income")];
        let r = Hyperrectangle::from_intervals([(1, Interval::at_most(3.0)), (0, Interval::above(1.0))]);
        let v = r.to_named_json(&features);
        assert_eq!(v["income"], serde_json::json!(["-inf", 3.0]));
        let back = Hyperrectangle::<f64>::from_named_json(&v, &features).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn widening_never_drops_membership(
            lo in -10.0f64..10.0, w in 0.0f64..5.0, grow_lo in 0.0f64..3.0, grow_hi in 0.0f64..3.0,
            x in -20.0f64..20.0,
        ) {
            let narrow = rect(&[(0, lo, lo + w)]);
            let wide = rect(&[(0, lo - grow_lo, lo + w + grow_hi)]);
            if narrow.contains(&[x]) {
                prop_assert!(wide.contains(&[x]));
            }
        }
    }
}
