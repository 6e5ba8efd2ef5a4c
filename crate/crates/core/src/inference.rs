//! Per-gene decisions from a fitted mixture: likelihood ratios, posterior
//! t-statistics, local false discovery rates and Benjamini-Hochberg calls.

use serde::{Deserialize, Serialize};

use crate::em::{error_variances, FitResult};
use crate::error::{Error, Result};
use crate::model::{ln_normal_pdf, EffectSpread, GeneSummaries, ModelKind};
use crate::prior::VariancePrior;
use crate::real::{normal_sf, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig<T> {
    /// Genes with posterior null probability below this are called.
    pub local_fdr_threshold: T,
    /// Benjamini-Hochberg level.
    pub fdr_level: T,
    /// Calls additionally require `|d_g - tau| >= min_abs_effect`.
    pub min_abs_effect: T,
}

impl<T: Real> Default for DecisionConfig<T> {
    fn default() -> Self {
        Self {
            local_fdr_threshold: T::lit(0.2),
            fdr_level: T::lit(0.05),
            min_abs_effect: T::zero(),
        }
    }
}

impl<T: Real> DecisionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.local_fdr_threshold) {
            return Err(Error::Domain(format!(
                "local fdr threshold must lie in [0, 1], got {}",
                self.local_fdr_threshold
            )));
        }
        if !unit(self.fdr_level) {
            return Err(Error::Domain(format!("FDR level must lie in [0, 1], got {}", self.fdr_level)));
        }
        if !(self.min_abs_effect >= T::zero()) {
            return Err(Error::Domain(format!(
                "minimum absolute effect must be nonnegative, got {}",
                self.min_abs_effect
            )));
        }
        Ok(())
    }
}

/// Likelihood ratio, posterior t-statistic and shrinkage per gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrStats<T> {
    /// `f0(d_g) / f1(d_g)`.
    pub lr: Vec<T>,
    pub t_post: Vec<T>,
    pub lambda: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneInference<T> {
    pub lr: Vec<T>,
    pub t_post: Vec<T>,
    pub lambda: Vec<T>,
    pub local_fdr: Vec<T>,
    pub p_value: Vec<T>,
    pub bh_adjusted: Vec<T>,
    pub call_local: Vec<bool>,
    pub call_fdr: Vec<bool>,
}

impl<T> GeneInference<T> {
    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }
}

fn check_len<T: Real>(summaries: &GeneSummaries<T>, fit: &FitResult<T>) -> Result<()> {
    if summaries.len() != fit.d_var.len() {
        return Err(Error::Structure(format!(
            "fit has {} genes but summaries have {}",
            fit.d_var.len(),
            summaries.len()
        )));
    }
    Ok(())
}

/// Non-null component used for gene `g`: +1 for mean `tau + psi`, -1 for `tau - psi`.
fn component_sign<T: Real>(fit: &FitResult<T>, g: usize) -> T {
    if fit.posteriors.second[g] > fit.posteriors.nonnull[g] {
        -T::one()
    } else {
        T::one()
    }
}

/// Shrinkage coefficient of gene `g`: the weight of `d_g - tau` in the
/// posterior mean of the gene effect.
pub fn shrinkage<T: Real>(fit: &FitResult<T>, g: usize) -> T {
    let v = fit.nonnull_var(g);
    let lambda = match fit.params.spread {
        EffectSpread::SigmaPsi2(x) => x / v,
        EffectSpread::V0(x) => x * fit.error_var[g] / v,
    };
    lambda.max(T::zero()).min(T::one())
}

/// Likelihood ratios, posterior t-statistics and shrinkage coefficients.
///
/// In three-component fits each gene is scored against the non-null
/// component with the larger posterior probability. With zero spread the
/// t-statistic falls back to `(d_g - tau) / sigma_g`.
pub fn likelihood_ratio<T: Real>(summaries: &GeneSummaries<T>, fit: &FitResult<T>) -> Result<LrStats<T>> {
    check_len(summaries, fit)?;
    let n = summaries.len();
    let (tau, psi) = (fit.params.tau, fit.params.psi);
    let mut out = LrStats {
        lr: Vec::with_capacity(n),
        t_post: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
    };
    for g in 0..n {
        let d = summaries.d()[g];
        let s = fit.d_var[g];
        let v = fit.nonnull_var(g);
        let psi_g = component_sign(fit, g) * psi;
        let lambda = shrinkage(fit, g);
        let ln_lr = ln_normal_pdf(d, tau, s) - ln_normal_pdf(d, tau + psi_g, v);
        let t = if lambda > T::zero() {
            (lambda * (d - tau) + (T::one() - lambda) * psi_g) / (lambda * s).sqrt()
        } else {
            (d - tau) / s.sqrt()
        };
        out.lr.push(ln_lr.exp());
        out.t_post.push(t);
        out.lambda.push(lambda);
    }
    Ok(out)
}

/// Likelihood ratio written through the posterior t-statistic:
/// `sqrt(v / s) exp(-t^2 / 2) exp(psi^2 / (2 (v - s)))`, where `s` and `v`
/// are the null and non-null variances of `d_g`. Requires `v > s`.
pub fn lr_from_t<T: Real>(t: T, psi: T, null_var: T, nonnull_var: T) -> T {
    let two = T::lit(2.0);
    let ln = (nonnull_var / null_var).ln() / two - t * t / two + psi * psi / (two * (nonnull_var - null_var));
    ln.exp()
}

/// Calls genes whose posterior null probability is below `threshold`.
pub fn classify_local_fdr<T: Real>(fit: &FitResult<T>, threshold: T) -> Vec<bool> {
    fit.posteriors.local_fdr().into_iter().map(|l| l < threshold).collect()
}

/// Two-sided p-values under the null `d_g ~ N(tau, sigma_g^2)`.
pub fn theoretical_null_pvalues<T: Real>(summaries: &GeneSummaries<T>, fit: &FitResult<T>) -> Result<Vec<T>> {
    check_len(summaries, fit)?;
    Ok(two_sided_pvalues(summaries.d(), fit.params.tau, &fit.d_var))
}

fn two_sided_pvalues<T: Real>(d: &[T], tau: T, var: &[T]) -> Vec<T> {
    d.iter()
        .zip(var)
        .map(|(&dg, &v)| {
            let z = (dg - tau).abs() / v.sqrt();
            (T::lit(2.0) * normal_sf(z)).min(T::one())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult<T> {
    pub calls: Vec<bool>,
    /// Step-up adjusted p-values, `min_{j >= i} p_(j) G / j` capped at 1.
    pub adjusted: Vec<T>,
}

/// Benjamini-Hochberg step-up procedure at level `q`.
pub fn bh_procedure<T: Real>(p_values: &[T], q: T) -> Result<BhResult<T>> {
    if let Some(p) = p_values.iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
        return Err(Error::Domain(format!("p-values must lie in [0, 1], got {p}")));
    }
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::Domain(format!("FDR level must lie in [0, 1], got {q}")));
    }
    let n = p_values.len();
    let nt = T::from_count(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).expect("checked"));

    let mut cutoff = 0;
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= q * T::from_count(rank + 1) / nt {
            cutoff = rank + 1;
        }
    }
    // Ties straddling the cutoff are called together.
    let threshold = if cutoff > 0 { p_values[order[cutoff - 1]] } else { -T::one() };
    let calls = p_values.iter().map(|&p| cutoff > 0 && p <= threshold).collect();

    let mut adjusted = vec![T::zero(); n];
    let mut running = T::one();
    for rank in (0..n).rev() {
        let i = order[rank];
        running = running.min((p_values[i] * nt / T::from_count(rank + 1)).max(p_values[i]));
        adjusted[i] = running;
    }
    Ok(BhResult { calls, adjusted })
}

/// Assembles the per-gene table and applies both decision rules.
pub fn decide<T: Real>(summaries: &GeneSummaries<T>, fit: &FitResult<T>, config: &DecisionConfig<T>) -> Result<GeneInference<T>> {
    config.validate()?;
    let lr = likelihood_ratio(summaries, fit)?;
    let p_value = theoretical_null_pvalues(summaries, fit)?;
    let bh = bh_procedure(&p_value, config.fdr_level)?;
    let local_fdr = fit.posteriors.local_fdr();
    let effect_ok: Vec<bool> = summaries
        .d()
        .iter()
        .map(|&d| (d - fit.params.tau).abs() >= config.min_abs_effect)
        .collect();
    let call_local = local_fdr
        .iter()
        .zip(&effect_ok)
        .map(|(&l, &ok)| ok && l < config.local_fdr_threshold)
        .collect();
    let call_fdr = bh.calls.iter().zip(&effect_ok).map(|(&c, &ok)| ok && c).collect();
    Ok(GeneInference {
        lr: lr.lr,
        t_post: lr.t_post,
        lambda: lr.lambda,
        local_fdr,
        p_value,
        bh_adjusted: bh.adjusted,
        call_local,
        call_fdr,
    })
}

/// Statistics for the fixed-effect kinds, which have no mixture fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectStats<T> {
    pub model: ModelKind,
    /// Precision-weighted mean of `d`, the all-null estimate of tau.
    pub tau: T,
    pub d_var: Vec<T>,
    /// `(d_g - tau) / sigma_g`, the limit of the posterior t-statistic as the
    /// shrinkage coefficient tends to one.
    pub t: Vec<T>,
    pub p_value: Vec<T>,
}

/// Fixed-effect t-statistics and p-values for FR, FF or FH.
pub fn fixed_effect_statistics<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
) -> Result<FixedEffectStats<T>> {
    if kind.is_random_mean() {
        return Err(Error::InvalidInput(format!("{kind} is a random-mean model; fit it instead")));
    }
    let e = error_variances(summaries, prior, kind)?;
    let d_var: Vec<T> = e.iter().enumerate().map(|(g, &eg)| eg * summaries.var_factor(g)).collect();
    let (mut num, mut den) = (T::zero(), T::zero());
    for (&d, &v) in summaries.d().iter().zip(&d_var) {
        num = num + d / v;
        den = den + T::one() / v;
    }
    let tau = num / den;
    let t = summaries.d().iter().zip(&d_var).map(|(&d, &v)| (d - tau) / v.sqrt()).collect();
    let p_value = two_sided_pvalues(summaries.d(), tau, &d_var);
    Ok(FixedEffectStats {
        model: kind,
        tau,
        d_var,
        t,
        p_value,
    })
}
