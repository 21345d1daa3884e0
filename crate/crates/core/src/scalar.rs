//! Numeric scalar abstraction shared by every estimator in the crate.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable for feature values, thresholds and weights.
///
/// Implemented for `f32` and `f64`. Interval bounds rely on [`Scalar::next_up`]
/// to express the strict side of a split (`x > t`) as a closed bound.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Smallest representable value strictly greater than `self`.
    fn next_up(self) -> Self;

    /// Largest representable value strictly smaller than `self`.
    fn next_down(self) -> Self;

    /// Lossy conversion from a literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn next_up(self) -> Self {
        f64::next_up(self)
    }

    fn next_down(self) -> Self {
        f64::next_down(self)
    }
}

impl Scalar for f32 {
    fn next_up(self) -> Self {
        f32::next_up(self)
    }

    fn next_down(self) -> Self {
        f32::next_down(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_up_is_strictly_greater() {
        for v in [-1.5f64, 0.0, 2.5, 1e300] {
            assert!(v.next_up() > v);
            assert!(v.next_down() < v);
            assert_eq!(v.next_up().next_down(), v);
        }
        assert!(<f32 as Scalar>::next_up(0.5f32) > 0.5);
    }
}
