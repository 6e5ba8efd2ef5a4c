//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! The estimators are written once against [`Real`] and instantiated for
//! `f64` (the default, see the aliases at the crate root) and `f32`.
//! Special functions without a generic implementation are evaluated in
//! `f64` and rounded back.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the estimators.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Natural log of the gamma function.
    fn ln_gamma(self) -> Self;
    /// Derivative of `ln_gamma`.
    fn digamma(self) -> Self;
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }
    fn digamma(self) -> Self {
        statrs::function::gamma::digamma(self)
    }
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }
    fn digamma(self) -> Self {
        statrs::function::gamma::digamma(self as f64) as f32
    }
    fn erfc(self) -> Self {
        libm::erfc(self as f64) as f32
    }
}

/// Standard normal upper tail `1 - Φ(z)`, accurate far into the tail.
pub fn normal_sf<T: Real>(z: T) -> T {
    (z / T::SQRT_2()).erfc() / T::lit(2.0)
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(z: T) -> T {
    normal_sf(-z)
}

/// `log(exp(a) + exp(b))` without overflow; handles `-inf` operands.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    let hi = a.max(b);
    if hi == T::neg_infinity() {
        return hi;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if hi == T::neg_infinity() || hi == T::infinity() {
        return hi;
    }
    hi + xs.iter().map(|&x| (x - hi).exp()).sum::<T>().ln()
}

/// Median of a non-empty slice (average of the two middle values for even length).
pub fn median<T: Real>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Sample mean and unbiased sample variance. Variance is zero for a single value.
pub fn mean_var<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - T::one()))
}
