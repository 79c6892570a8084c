//! Numeric type used for metric arithmetic.
//!
//! Metrics are ratios of counts, so they can be computed in any field: `f64`
//! for reports, `f32` where space matters, or [`Rational64`] for exact
//! comparisons against hand-computed fractions.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync {
    fn from_count(n: usize) -> Self;

    fn to_f64(self) -> f64;

    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            Self::zero()
        } else {
            Self::from_count(numerator) / Self::from_count(denominator)
        }
    }

    /// Harmonic mean of two rates; zero when both are zero.
    fn harmonic(a: Self, b: Self) -> Self {
        let sum = a + b;
        if sum == Self::zero() {
            Self::zero()
        } else {
            let two = Self::one() + Self::one();
            two * a * b / sum
        }
    }

    /// Arithmetic mean; zero for an empty input.
    fn mean<I: IntoIterator<Item = Self>>(values: I) -> Self {
        let (sum, n) = values
            .into_iter()
            .fold((Self::zero(), 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            Self::zero()
        } else {
            sum / Self::from_count(n)
        }
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for Rational64 {
    fn from_count(n: usize) -> Self {
        Rational64::from_integer(i64::try_from(n).expect("count fits in i64"))
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}
