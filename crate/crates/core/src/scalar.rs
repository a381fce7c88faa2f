//! Scalar abstraction for the numeric modules.
//!
//! Everything that does arithmetic on states, covariances or distances is
//! generic over [`Real`], which is implemented for `f32` and `f64`.

use nalgebra::RealField;
use num_traits::{FloatConst, ToPrimitive};

/// Floating point scalar usable by the filter, metrics and assignment code.
pub trait Real: RealField + Copy + FloatConst + ToPrimitive {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn neg_infinity() -> Self {
        Self::lit(f64::NEG_INFINITY)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(2π)`
    #[inline]
    fn ln_two_pi() -> Self {
        Self::TAU().ln()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln Σ exp(v)`, stable for inputs spanning many orders of magnitude.
///
/// Returns `-∞` for an empty input or when every term is `-∞`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |acc, v| if v > acc { v } else { acc });
    if max == T::neg_infinity() || max == T::infinity() {
        return max;
    }
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// `ln(x)` with `ln(0) = -∞`.
#[inline]
pub fn ln_or_neg_inf<T: Real>(x: T) -> T {
    if x > T::zero() {
        x.ln()
    } else {
        T::neg_infinity()
    }
}
