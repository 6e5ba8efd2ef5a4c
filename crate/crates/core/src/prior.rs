//! Inverse-gamma prior on the gene error variances.
//!
//! The precision `1 / sigma_eps^2` follows a gamma distribution with shape
//! `alpha` and scale `beta`, and `m_g | sigma^2 ~ sigma^2 chi^2_f / f`, so the
//! marginal of `m_g` is a scaled F distribution. Hyperparameters are fit to
//! `{m_g}` alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GeneSummaries;
use crate::optim::{minimize_bounded, MinimizeOptions};
use crate::real::Real;

/// Minimum number of genes with `m_g > 0` needed to fit the prior.
pub const MIN_PRIOR_GENES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMethod {
    MaxLikelihood,
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePrior<T> {
    pub alpha: T,
    pub beta: T,
    pub method: PriorMethod,
}

impl<T: Real> VariancePrior<T> {
    pub fn new(alpha: T, beta: T, method: PriorMethod) -> Result<Self> {
        let p = Self { alpha, beta, method };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if self.alpha > T::zero() && self.beta > T::zero() && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "prior needs alpha > 0 and beta > 0, got ({}, {})",
                self.alpha, self.beta
            )))
        }
    }

    /// Mode of the inverse-gamma prior on `sigma_eps^2`, `1 / ((alpha + 1) beta)`.
    pub fn mode(&self) -> T {
        T::one() / ((self.alpha + T::one()) * self.beta)
    }

    /// Prior mean of `sigma_eps^2`; infinite when `alpha <= 1`.
    pub fn mean(&self) -> T {
        if self.alpha > T::one() {
            T::one() / ((self.alpha - T::one()) * self.beta)
        } else {
            T::infinity()
        }
    }
}

/// Log marginal density of `m` after integrating out the gene variance.
///
/// Returns `-inf` for `m = 0` with `f >= 3` and `+inf` for `m = 0` with
/// `f = 1`.
pub fn marginal_log_density_m<T: Real>(m: T, f: u32, prior: &VariancePrior<T>) -> Result<T> {
    prior.check()?;
    if f == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if !(m >= T::zero()) {
        return Err(Error::Domain(format!("m must be nonnegative, got {m}")));
    }
    Ok(log_density_unchecked(m, f, prior.alpha, prior.beta))
}

fn log_density_unchecked<T: Real>(m: T, f: u32, alpha: T, beta: T) -> T {
    let h = T::from_u32(f).expect("u32 representable") / T::lit(2.0);
    let power = if f == 2 { T::zero() } else { (h - T::one()) * m.ln() };
    power + h * h.ln() - h.ln_gamma() - alpha.ln_gamma() - alpha * beta.ln() + (h + alpha).ln_gamma()
        - (h + alpha) * (m * h + T::one() / beta).ln()
}

/// Negative mean log marginal likelihood and its gradient in `(ln alpha, ln beta)`.
fn objective<T: Real>(m: &[T], f: &[u32], x: &[T]) -> (T, Vec<T>) {
    let (alpha, beta) = (x[0].exp(), x[1].exp());
    let n = T::from_count(m.len());
    let (dg_alpha, ln_beta, inv_beta) = (alpha.digamma(), beta.ln(), T::one() / beta);
    let mut ll = T::zero();
    let mut ga = T::zero();
    let mut gb = T::zero();
    for (&mg, &fg) in m.iter().zip(f) {
        let h = T::from_u32(fg).expect("u32 representable") / T::lit(2.0);
        let rate = mg * h + inv_beta;
        ll = ll + log_density_unchecked(mg, fg, alpha, beta);
        ga = ga - dg_alpha - ln_beta + (h + alpha).digamma() - rate.ln();
        gb = gb - alpha / beta + (h + alpha) / (beta * beta * rate);
    }
    (-ll / n, vec![-ga * alpha / n, -gb * beta / n])
}

/// Maximum-likelihood hyperparameters from per-gene `(m_g, f_g)`.
///
/// Genes with `m_g = 0` carry no usable information about the spread of the
/// variances (their density is degenerate at zero) and are left out.
pub fn fit_prior_ml<T: Real>(m: &[T], f: &[u32]) -> Result<VariancePrior<T>> {
    let (m, f): (Vec<T>, Vec<u32>) = m
        .iter()
        .zip(f)
        .filter(|(&mg, _)| mg > T::zero())
        .map(|(&mg, &fg)| (mg, fg))
        .unzip();
    if m.len() < MIN_PRIOR_GENES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_PRIOR_GENES} genes with m > 0 to fit the variance prior, found {}",
            m.len()
        )));
    }
    let start = match fit_prior_moments(&m, &f) {
        Ok(p) => p,
        Err(_) => {
            let mean = m.iter().copied().sum::<T>() / T::from_count(m.len());
            VariancePrior {
                alpha: T::lit(2.5),
                beta: T::one() / (T::lit(1.5) * mean),
                method: PriorMethod::MaxLikelihood,
            }
        }
    };
    let lower = [T::lit(1e-3).ln(), T::lit(-40.0)];
    let upper = [T::lit(1e6).ln(), T::lit(40.0)];
    let x0 = [
        start.alpha.ln().max(lower[0]).min(upper[0]),
        start.beta.ln().max(lower[1]).min(upper[1]),
    ];
    let fit = minimize_bounded(
        |x| objective(&m, &f, x),
        &x0,
        &lower,
        &upper,
        MinimizeOptions {
            rel_tol: T::lit(1e-8),
            max_iter: 500,
        },
    );
    if !fit.converged {
        return Err(Error::NoConvergence {
            iterations: fit.iterations,
            best: vec![fit.x[0].exp().as_f64(), fit.x[1].exp().as_f64()],
            objective: fit.value.as_f64(),
            gradient_norm: fit.grad_norm.as_f64(),
        });
    }
    VariancePrior::new(fit.x[0].exp(), fit.x[1].exp(), PriorMethod::MaxLikelihood)
}

/// Method-of-moments hyperparameters from per-gene `(m_g, f_g)`.
///
/// Matches `E[m] = 1/((alpha-1) beta)` and
/// `E[m^2 / (1 + 2/f)] = E[sigma^4] = E[m]^2 (alpha-1)/(alpha-2)`, giving
/// `alpha = 2 + 1/(k-1)` with `k` the empirical ratio of the two sides.
pub fn fit_prior_moments<T: Real>(m: &[T], f: &[u32]) -> Result<VariancePrior<T>> {
    if m.len() != f.len() || m.is_empty() {
        return Err(Error::Structure("m and f must be non-empty and equal length".into()));
    }
    let n = T::from_count(m.len());
    let mean = m.iter().copied().sum::<T>() / n;
    if !(mean > T::zero()) {
        return Err(Error::MomentsUnavailable { alpha: f64::NAN });
    }
    let second = m
        .iter()
        .zip(f)
        .map(|(&mg, &fg)| mg * mg / (T::one() + T::lit(2.0) / T::from_u32(fg).expect("u32 representable")))
        .sum::<T>()
        / n;
    let k = second / (mean * mean);
    if !(k > T::one()) {
        let alpha = if k == T::one() { f64::INFINITY } else { (T::lit(2.0) + T::one() / (k - T::one())).as_f64() };
        return Err(Error::MomentsUnavailable { alpha });
    }
    let alpha = T::lit(2.0) + T::one() / (k - T::one());
    let beta = T::one() / ((alpha - T::one()) * mean);
    VariancePrior::new(alpha, beta, PriorMethod::Moments)
}

/// Maximum-likelihood prior for two-group or paired summaries.
pub fn fit_variance_prior<T: Real>(summaries: &GeneSummaries<T>) -> Result<VariancePrior<T>> {
    fit_prior_ml(summaries.m(), summaries.f())
}

/// Moment-matching prior for two-group or paired summaries.
pub fn fit_variance_prior_moments<T: Real>(summaries: &GeneSummaries<T>) -> Result<VariancePrior<T>> {
    fit_prior_moments(summaries.m(), summaries.f())
}

/// Posterior mode of `sigma_eps^2` given `m`: a convex combination of `m`
/// and the prior mode with weights `(f/2, alpha+1) / (f/2 + alpha + 1)`.
pub fn posterior_mode_variance<T: Real>(m: T, f: u32, prior: &VariancePrior<T>) -> T {
    let h = T::from_u32(f).expect("u32 representable") / T::lit(2.0);
    let denom = h + prior.alpha + T::one();
    h / denom * m + (prior.alpha + T::one()) / denom * prior.mode()
}

/// Posterior mean of `sigma_eps^2` given `m`. Needs `f/2 + alpha > 1`.
pub fn posterior_mean_variance<T: Real>(m: T, f: u32, prior: &VariancePrior<T>) -> Result<T> {
    let h = T::from_u32(f).expect("u32 representable") / T::lit(2.0);
    let denom = h + prior.alpha - T::one();
    if !(denom > T::zero()) {
        return Err(Error::Domain(format!(
            "posterior mean needs f/2 + alpha > 1, got f = {f}, alpha = {}",
            prior.alpha
        )));
    }
    Ok(h / denom * m + (prior.alpha + T::one()) / denom * prior.mode())
}

/// Homogeneous error-variance estimate `sum(m_g f_g) / sum(f_g)`.
pub fn pooled_variance<T: Real>(m: &[T], f: &[u32]) -> T {
    let ff: Vec<T> = f.iter().map(|&v| T::from_u32(v).expect("u32 representable")).collect();
    let num: T = m.iter().zip(&ff).map(|(&a, &b)| a * b).sum();
    num / ff.iter().copied().sum::<T>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior(alpha: f64, beta: f64) -> VariancePrior<f64> {
        VariancePrior::new(alpha, beta, PriorMethod::MaxLikelihood).unwrap()
    }

    #[test]
    fn posterior_mode_hand_value() {
        let v = posterior_mode_variance(1.0, 10, &prior(2.0, 0.5));
        assert!((v - 0.875).abs() < 1e-15);
    }

    #[test]
    fn posterior_mode_fixed_point() {
        let p = prior(3.3, 0.17);
        let m = p.mode();
        assert!((posterior_mode_variance(m, 7, &p) - m).abs() < 1e-15);
    }

    #[test]
    fn posterior_estimates_approach_m_for_large_f() {
        let p = prior(4.0, 0.2);
        let big = 2_000_000_000;
        assert!((posterior_mode_variance(2.5, big, &p) - 2.5).abs() < 1e-8);
        assert!((posterior_mean_variance(2.5, big, &p).unwrap() - 2.5).abs() < 1e-8);
    }

    #[test]
    fn posterior_mean_hand_value() {
        let v = posterior_mean_variance(1.0, 10, &prior(2.0, 0.5)).unwrap();
        assert!((v - 7.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_mean_domain() {
        assert!(posterior_mean_variance(1.0, 1, &prior(0.4, 1.0)).is_err());
    }

    #[test]
    fn marginal_density_edge_cases() {
        let p = prior(5.0, 1.0 / 12.0);
        assert_eq!(marginal_log_density_m(0.0, 10, &p).unwrap(), f64::NEG_INFINITY);
        assert!(marginal_log_density_m(0.0, 2, &p).unwrap().is_finite());
        assert_eq!(marginal_log_density_m(0.0, 1, &p).unwrap(), f64::INFINITY);
        assert!(marginal_log_density_m(1.0, 4, &VariancePrior { alpha: 0.0, ..p }).is_err());
        assert!(marginal_log_density_m(-1.0, 4, &p).is_err());
    }

    #[test]
    fn moments_reject_constant_input() {
        let m = vec![0.7; 50];
        let f = vec![10; 50];
        assert!(matches!(fit_prior_moments(&m, &f), Err(Error::MomentsUnavailable { .. })));
    }

    #[test]
    fn ml_needs_enough_genes() {
        let m = vec![0.5, 1.0, 2.0];
        let f = vec![4; 3];
        assert!(matches!(fit_prior_ml(&m, &f), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pooled_is_f_weighted_mean() {
        let v = pooled_variance::<f64>(&[1.0, 3.0], &[1, 3]);
        assert!((v - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = [0.3, 1.2, 2.5, 0.9, 0.05];
        let f = [4, 10, 3, 7, 12];
        let x = [1.1_f64, -1.7];
        let (_, g) = objective(&m, &f, &x);
        for i in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (objective(&m, &f, &xp).0 - objective(&m, &f, &xm).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    proptest::proptest! {
        #[test]
        fn mode_weights_stay_between_inputs(m in 1e-4f64..50.0, f in 1u32..60, a in 0.1f64..20.0, b in 1e-3f64..5.0) {
            let p = prior(a, b);
            let v = posterior_mode_variance(m, f, &p);
            let (lo, hi) = (m.min(p.mode()), m.max(p.mode()));
            proptest::prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn mean_dominates_mode(m in 1e-4f64..50.0, f in 1u32..60, a in 0.6f64..20.0, b in 1e-3f64..5.0) {
            let p = prior(a, b);
            proptest::prop_assume!(f as f64 / 2.0 + a > 1.0);
            proptest::prop_assert!(posterior_mean_variance(m, f, &p).unwrap() >= posterior_mode_variance(m, f, &p));
        }
    }
}
