//! Laplace-approximated EM for the random-mean mixture models.
//!
//! After the variance integral is replaced by its Laplace approximation the
//! per-gene error variance enters only through a plug-in value, and the
//! observed-data likelihood becomes a normal mixture in `d_g` with gene-specific
//! variances:
//!
//! * null: `N(tau, s_g)` with `s_g = sigma_eps_g^2 * (1/n1 + 1/n2)`;
//! * non-null: `N(tau + psi, a_g x + s_g)`, where `x = sigma_psi2` and `a_g = 1`
//!   for additive spread, or `x = v0` and `a_g = sigma_eps_g^2` for the
//!   proportional (RG) spread;
//! * three-component fits add `N(tau - psi, a_g x + s_g)`.
//!
//! Genes are processed in a canonical order (sorted by their summaries) so
//! that fits are bitwise invariant to the input gene order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ln_normal_pdf, Components, EffectSpread, ErrorVarianceModel, GeneSummaries, MixtureParams, ModelKind};
use crate::optim::{nonnegative_root, RootError};
use crate::prior::{pooled_variance, posterior_mode_variance, VariancePrior};
use crate::real::{log_add_exp, mean_var, median, Real};

/// Starting values for EM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init<T> {
    /// Data-driven start, see [`auto_init`].
    Auto,
    Given(MixtureParams<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig<T> {
    pub max_iters: usize,
    /// Relative change of the marginal log-likelihood below which EM stops.
    pub tol: T,
    /// Maximum per-gene posterior change that must also be reached.
    pub posterior_tol: T,
    pub init: Init<T>,
    pub components: Components,
}

impl<T: Real> Default for EmConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: T::lit(1e-8),
            posterior_tol: T::lit(1e-6),
            init: Init::Auto,
            components: Components::Two,
        }
    }
}

impl<T: Real> EmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.tol > T::zero()) || !(self.posterior_tol > T::zero()) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One EM iteration: the parameters, the approximate marginal log-likelihood
/// at those parameters, and the largest posterior change from the previous
/// iteration (infinite for the starting point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmIteration<T> {
    pub params: MixtureParams<T>,
    pub loglik: T,
    pub max_posterior_change: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmTrace<T> {
    pub iterations: Vec<EmIteration<T>>,
    /// Numerical events worth surfacing, e.g. root-finder fallbacks.
    pub notes: Vec<String>,
}

impl<T: Real> EmTrace<T> {
    pub fn logliks(&self) -> Vec<T> {
        self.iterations.iter().map(|it| it.loglik).collect()
    }
}

/// Per-gene posterior membership probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors<T> {
    /// Non-null component with mean `tau + psi`.
    pub nonnull: Vec<T>,
    /// Second non-null component with mean `tau - psi`; all zeros for
    /// two-component fits.
    pub second: Vec<T>,
}

impl<T: Real> Posteriors<T> {
    pub fn len(&self) -> usize {
        self.nonnull.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonnull.is_empty()
    }

    /// Posterior null probability `1 - p1g - p2g`, clamped to `[0, 1]`.
    pub fn local_fdr(&self) -> Vec<T> {
        self.nonnull
            .iter()
            .zip(&self.second)
            .map(|(&a, &b)| (T::one() - a - b).max(T::zero()).min(T::one()))
            .collect()
    }

    fn max_abs_diff(&self, other: &Self) -> T {
        let diff = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
        diff(&self.nonnull, &other.nonnull).max(diff(&self.second, &other.second))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub model: ModelKind,
    pub components: Components,
    pub params: MixtureParams<T>,
    pub prior: VariancePrior<T>,
    /// Plug-in error variance per gene (posterior mode, `m_g`, or pooled).
    pub error_var: Vec<T>,
    /// Plug-in variance of `d_g` under the null, `error_var * (1/n1 + 1/n2)`.
    pub d_var: Vec<T>,
    pub posteriors: Posteriors<T>,
    pub trace: EmTrace<T>,
    pub converged: bool,
}

impl<T: Real> FitResult<T> {
    pub fn iterations(&self) -> usize {
        self.trace.iterations.len().saturating_sub(1)
    }

    pub fn loglik(&self) -> T {
        self.trace.iterations.last().map(|it| it.loglik).unwrap_or(T::nan())
    }

    /// Variance of the non-null component for gene `g`.
    pub fn nonnull_var(&self, g: usize) -> T {
        match self.params.spread {
            EffectSpread::SigmaPsi2(x) => x + self.d_var[g],
            EffectSpread::V0(x) => x * self.error_var[g] + self.d_var[g],
        }
    }
}

/// Plug-in error variance per gene for the given model kind.
pub fn error_variances<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
) -> Result<Vec<T>> {
    let (m, f) = (summaries.m(), summaries.f());
    match kind.error_variance() {
        ErrorVarianceModel::PosteriorMode => Ok(m.iter().zip(f).map(|(&mg, &fg)| posterior_mode_variance(mg, fg, prior)).collect()),
        ErrorVarianceModel::PerGene => {
            if let Some(g) = m.iter().position(|&v| !(v > T::zero())) {
                return Err(Error::Domain(format!(
                    "{kind} uses m_g as the error variance but gene {} has m_g = 0",
                    summaries.gene_ids()[g]
                )));
            }
            Ok(m.to_vec())
        }
        ErrorVarianceModel::Pooled => {
            let order = canonical_order(summaries);
            let (mc, fc): (Vec<T>, Vec<u32>) = order.iter().map(|&g| (m[g], f[g])).unzip();
            let v = pooled_variance(&mc, &fc);
            if !(v > T::zero()) {
                return Err(Error::Domain("pooled error variance is zero".into()));
            }
            Ok(vec![v; m.len()])
        }
    }
}

/// Gene order used for every reduction: sorted by `(d, m, f, n1, n2)`.
pub(crate) fn canonical_order<T: Real>(s: &GeneSummaries<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&i, &j| {
        s.d()[i]
            .partial_cmp(&s.d()[j])
            .expect("finite")
            .then(s.m()[i].partial_cmp(&s.m()[j]).expect("finite"))
            .then(s.f()[i].cmp(&s.f()[j]))
            .then(s.n1()[i].cmp(&s.n1()[j]))
            .then(s.n2()[i].cmp(&s.n2()[j]))
    });
    idx
}

/// Per-gene quantities the EM needs, in canonical order.
#[derive(Debug, Clone)]
pub(crate) struct Plugin<T> {
    pub order: Vec<usize>,
    pub d: Vec<T>,
    /// Null variance of `d_g`.
    pub s: Vec<T>,
    /// Error variance.
    pub e: Vec<T>,
    /// Multiplier of the spread parameter in the non-null variance.
    pub a: Vec<T>,
    proportional: bool,
}

impl<T: Real> Plugin<T> {
    pub fn new(summaries: &GeneSummaries<T>, prior: &VariancePrior<T>, kind: ModelKind) -> Result<Self> {
        let e_in = error_variances(summaries, prior, kind)?;
        let order = canonical_order(summaries);
        let d = order.iter().map(|&i| summaries.d()[i]).collect();
        let e: Vec<T> = order.iter().map(|&i| e_in[i]).collect();
        let s = order.iter().zip(&e).map(|(&i, &ei)| ei * summaries.var_factor(i)).collect();
        let proportional = kind.is_proportional();
        let a = if proportional { e.clone() } else { vec![T::one(); e.len()] };
        Ok(Self {
            order,
            d,
            s,
            e,
            a,
            proportional,
        })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn nonnull_var(&self, g: usize, x: T) -> T {
        self.a[g] * x + self.s[g]
    }

    /// Scatter canonical-order values back to input order.
    pub fn unpermute(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    pub fn spread(&self, x: T) -> EffectSpread<T> {
        if self.proportional {
            EffectSpread::V0(x)
        } else {
            EffectSpread::SigmaPsi2(x)
        }
    }
}

fn ln_prob<T: Real>(p: T) -> T {
    if p > T::zero() {
        p.ln()
    } else {
        T::neg_infinity()
    }
}

/// Log joint weights `log(p_k f_k(d_g))` for the null and non-null components.
#[inline]
fn log_weights<T: Real>(pl: &Plugin<T>, params: &MixtureParams<T>, lp: [T; 3], g: usize) -> [T; 3] {
    let x = params.spread.value();
    let v = pl.nonnull_var(g, x);
    let d = pl.d[g];
    let w0 = lp[0] + ln_normal_pdf(d, params.tau, pl.s[g]);
    let w1 = lp[1] + ln_normal_pdf(d, params.tau + params.psi, v);
    let w2 = if lp[2] == T::neg_infinity() {
        T::neg_infinity()
    } else {
        lp[2] + ln_normal_pdf(d, params.tau - params.psi, v)
    };
    [w0, w1, w2]
}

/// E-step in canonical order: posteriors and the approximate marginal log-likelihood.
pub(crate) fn e_step_plugin<T: Real>(pl: &Plugin<T>, params: &MixtureParams<T>) -> (Posteriors<T>, T) {
    let lp = [ln_prob(params.p0().max(T::zero())), ln_prob(params.p1), ln_prob(params.p2)];
    let per_gene: Vec<(T, T, T)> = (0..pl.len())
        .into_par_iter()
        .map(|g| {
            let w = log_weights(pl, params, lp, g);
            let total = log_add_exp(log_add_exp(w[0], w[1]), w[2]);
            let p1 = if w[1] == T::neg_infinity() { T::zero() } else { (w[1] - total).exp() };
            let p2 = if w[2] == T::neg_infinity() { T::zero() } else { (w[2] - total).exp() };
            (p1, p2, total)
        })
        .collect();
    let loglik = per_gene.iter().map(|t| t.2).fold(T::zero(), |acc, v| acc + v);
    let (nonnull, second) = per_gene.iter().map(|t| (t.0, t.1)).unzip();
    (Posteriors { nonnull, second }, loglik)
}

/// Diagnostic raised by an M-step.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum MStepNote {
    RootFallback(String),
}

/// Maximizer of the spread part of Q given the centred residuals.
///
/// `weights[k][g]` are the posterior weights of non-null component `k` and
/// `resid[k][g]` the matching residuals.
fn update_spread<T: Real>(
    pl: &Plugin<T>,
    weights: &[&[T]],
    resid: &[Vec<T>],
    x_prev: T,
    notes: &mut Vec<MStepNote>,
) -> T {
    let n = pl.len();
    let h = |x: T| -> T {
        let mut acc = T::zero();
        for g in 0..n {
            let v = pl.nonnull_var(g, x);
            for (w, r) in weights.iter().zip(resid) {
                acc = acc + w[g] * pl.a[g] * (v - r[g] * r[g]) / (v * v);
            }
        }
        acc
    };
    let q = |x: T| -> T {
        let mut acc = T::zero();
        for g in 0..n {
            let v = pl.nonnull_var(g, x);
            let ln_v = v.ln();
            for (w, r) in weights.iter().zip(resid) {
                acc = acc - w[g] * (ln_v + r[g] * r[g] / v);
            }
        }
        acc
    };
    let (_, var_d) = mean_var(&pl.d);
    let mean_a = pl.a.iter().copied().sum::<T>() / T::from_count(n);
    let upper = (T::lit(10.0) * var_d / mean_a).max(T::lit(1e-8));
    let x = match nonnegative_root(h, upper, T::lit(1e-300).max(T::min_positive_value())) {
        Ok(Some(x)) => x,
        Ok(None) => T::zero(),
        Err(err) => {
            let msg = match err {
                RootError::NoSignChange { b, .. } => format!("no sign change up to {b}"),
                RootError::NotFinite { x, fx } => format!("non-finite value {fx} at {x}"),
                RootError::MaxIter { best } => format!("iteration limit near {best}"),
            };
            notes.push(MStepNote::RootFallback(msg));
            T::zero()
        }
    };
    // The stationarity equation can in principle have several roots; never
    // step to a point that lowers Q.
    if x_prev.is_finite() && x_prev >= T::zero() && q(x_prev) > q(x) {
        x_prev
    } else {
        x
    }
}

/// Conditional-maximization M-step in canonical order.
pub(crate) fn m_step_plugin<T: Real>(
    pl: &Plugin<T>,
    post: &Posteriors<T>,
    prev: &MixtureParams<T>,
    components: Components,
    notes: &mut Vec<MStepNote>,
) -> MixtureParams<T> {
    let n = pl.len();
    let nt = T::from_count(n);
    let p1g = &post.nonnull;
    let p2g = &post.second;
    let p0g: Vec<T> = (0..n).map(|g| (T::one() - p1g[g] - p2g[g]).max(T::zero())).collect();
    let p1 = p1g.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let p2 = match components {
        Components::Two => T::zero(),
        Components::Three => p2g.iter().fold(T::zero(), |a, &v| a + v) / nt,
    };
    let x_prev = prev.spread.value();

    match components {
        Components::Two => {
            let (mut num, mut den) = (T::zero(), T::zero());
            for g in 0..n {
                num = num + p0g[g] * pl.d[g] / pl.s[g];
                den = den + p0g[g] / pl.s[g];
            }
            let tau = if den > T::zero() { num / den } else { prev.tau };

            let (mut num, mut den) = (T::zero(), T::zero());
            for g in 0..n {
                let v = pl.nonnull_var(g, x_prev);
                num = num + p1g[g] * (pl.d[g] - tau) / v;
                den = den + p1g[g] / v;
            }
            if !(den > T::zero()) {
                return MixtureParams {
                    p1,
                    p2,
                    tau,
                    psi: T::zero(),
                    spread: pl.spread(T::zero()),
                };
            }
            let psi = num / den;
            let resid: Vec<T> = pl.d.iter().map(|&d| d - tau - psi).collect();
            let x = update_spread(pl, &[p1g], &[resid], x_prev, notes);
            MixtureParams {
                p1,
                p2,
                tau,
                psi,
                spread: pl.spread(x),
            }
        }
        Components::Three => {
            let psi_prev = prev.psi;
            let (mut num, mut den) = (T::zero(), T::zero());
            for g in 0..n {
                let v = pl.nonnull_var(g, x_prev);
                num = num
                    + p0g[g] * pl.d[g] / pl.s[g]
                    + (p1g[g] * (pl.d[g] - psi_prev) + p2g[g] * (pl.d[g] + psi_prev)) / v;
                den = den + p0g[g] / pl.s[g] + (p1g[g] + p2g[g]) / v;
            }
            let tau = if den > T::zero() { num / den } else { prev.tau };

            let (mut num, mut den) = (T::zero(), T::zero());
            for g in 0..n {
                let v = pl.nonnull_var(g, x_prev);
                num = num + (p1g[g] - p2g[g]) * (pl.d[g] - tau) / v;
                den = den + (p1g[g] + p2g[g]) / v;
            }
            if !(den > T::zero()) {
                return MixtureParams {
                    p1,
                    p2,
                    tau,
                    psi: T::zero(),
                    spread: pl.spread(T::zero()),
                };
            }
            let psi = num / den;
            let r1: Vec<T> = pl.d.iter().map(|&d| d - tau - psi).collect();
            let r2: Vec<T> = pl.d.iter().map(|&d| d - tau + psi).collect();
            let x = update_spread(pl, &[p1g, p2g], &[r1, r2], x_prev, notes);
            MixtureParams {
                p1,
                p2,
                tau,
                psi,
                spread: pl.spread(x),
            }
        }
    }
}

/// Data-driven starting point.
///
/// `p1 = 0.05` (and `p2 = 0.05` for three components), `tau` the median of
/// `d`, and `psi`, spread from the 5% of genes farthest from that median.
pub(crate) fn auto_init_plugin<T: Real>(pl: &Plugin<T>, components: Components, floor: T) -> MixtureParams<T> {
    let n = pl.len();
    let tau = median(&pl.d);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        (pl.d[j] - tau)
            .abs()
            .partial_cmp(&(pl.d[i] - tau).abs())
            .expect("finite")
            .then(i.cmp(&j))
    });
    let top = ((n as f64) * 0.05).ceil().max(1.0) as usize;
    let top = &idx[..top.min(n)];
    let values: Vec<T> = match components {
        Components::Two => top.iter().map(|&g| pl.d[g]).collect(),
        Components::Three => top.iter().map(|&g| (pl.d[g] - tau).abs()).collect(),
    };
    let (mean_top, var_top) = mean_var(&values);
    let psi = match components {
        Components::Two => mean_top - tau,
        Components::Three => mean_top,
    };
    let k = T::from_count(top.len());
    let mean_s = top.iter().map(|&g| pl.s[g]).sum::<T>() / k;
    let sigma_psi2 = (var_top - mean_s).max(floor);
    let spread = if pl.proportional {
        let mean_e = top.iter().map(|&g| pl.e[g]).sum::<T>() / k;
        EffectSpread::V0((sigma_psi2 / mean_e).max(floor))
    } else {
        EffectSpread::SigmaPsi2(sigma_psi2)
    };
    let p = T::lit(0.05);
    MixtureParams {
        p1: p,
        p2: if components == Components::Three { p } else { T::zero() },
        tau,
        psi,
        spread,
    }
}

/// Starting values EM would use for these inputs.
pub fn auto_init<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    components: Components,
) -> Result<MixtureParams<T>> {
    let pl = Plugin::new(summaries, prior, kind)?;
    Ok(auto_init_plugin(&pl, components, T::lit(0.01)))
}

/// Approximate observed-data log-likelihood `sum_g log(sum_k p_k f_k(d_g))`.
///
/// Factors of the Laplace approximation that do not depend on the mixture
/// parameters (the `m_g` likelihood, prior density and curvature term at the
/// plug-in variance) are omitted.
pub fn laplace_complete_loglik<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    params: &MixtureParams<T>,
) -> Result<T> {
    params.validate()?;
    params.check_kind(kind)?;
    let pl = Plugin::new(summaries, prior, kind)?;
    Ok(e_step_plugin(&pl, params).1)
}

/// Posterior non-null probabilities at the given parameters.
pub fn e_step<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    params: &MixtureParams<T>,
) -> Result<Posteriors<T>> {
    params.validate()?;
    params.check_kind(kind)?;
    let pl = Plugin::new(summaries, prior, kind)?;
    let (post, _) = e_step_plugin(&pl, params);
    Ok(Posteriors {
        nonnull: pl.unpermute(&post.nonnull),
        second: pl.unpermute(&post.second),
    })
}

/// One M-step from posteriors given in input gene order.
pub fn m_step<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    posteriors: &Posteriors<T>,
    prev: &MixtureParams<T>,
    components: Components,
) -> Result<MixtureParams<T>> {
    prev.check_kind(kind)?;
    let pl = Plugin::new(summaries, prior, kind)?;
    if posteriors.nonnull.len() != pl.len() || posteriors.second.len() != pl.len() {
        return Err(Error::Structure("posteriors do not match the number of genes".into()));
    }
    let post = Posteriors {
        nonnull: pl.order.iter().map(|&i| posteriors.nonnull[i]).collect(),
        second: pl.order.iter().map(|&i| posteriors.second[i]).collect(),
    };
    let mut notes = Vec::new();
    Ok(m_step_plugin(&pl, &post, prev, components, &mut notes))
}

/// Fits the mixture by EM.
///
/// Fixed-mean kinds (FR, FF, FH) are refused: their mixing proportion drifts
/// to one, see [`fixed_effect_divergence`].
pub fn fit<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    config: &EmConfig<T>,
) -> Result<FitResult<T>> {
    config.validate()?;
    if !kind.is_random_mean() {
        return Err(Error::NonIdentifiable(kind));
    }
    if config.components == Components::Three && !kind.supports_three_components() {
        return Err(Error::UnsupportedComponents(kind));
    }
    let pl = Plugin::new(summaries, prior, kind)?;
    let init = match config.init {
        Init::Auto => auto_init_plugin(&pl, config.components, T::lit(0.01)),
        Init::Given(p) => {
            p.validate()?;
            p.check_kind(kind)?;
            if config.components == Components::Two && p.p2 != T::zero() {
                return Err(Error::InvalidInput("two-component start must have p2 = 0".into()));
            }
            p
        }
    };
    let (post, trace, converged) = run_em(&pl, init, config);
    let error_var = pl.unpermute(&pl.e);
    let d_var = pl.unpermute(&pl.s);
    Ok(FitResult {
        model: kind,
        components: config.components,
        params: trace.iterations.last().expect("at least the start").params,
        prior: *prior,
        error_var,
        d_var,
        posteriors: Posteriors {
            nonnull: pl.unpermute(&post.nonnull),
            second: pl.unpermute(&post.second),
        },
        trace,
        converged,
    })
}

/// A [`FitResult`] at fixed parameters, without iterating; used for oracle
/// comparisons with known parameters.
pub fn evaluate<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    params: &MixtureParams<T>,
) -> Result<FitResult<T>> {
    params.validate()?;
    params.check_kind(kind)?;
    let pl = Plugin::new(summaries, prior, kind)?;
    let (post, loglik) = e_step_plugin(&pl, params);
    Ok(FitResult {
        model: kind,
        components: if params.p2 > T::zero() { Components::Three } else { Components::Two },
        params: *params,
        prior: *prior,
        error_var: pl.unpermute(&pl.e),
        d_var: pl.unpermute(&pl.s),
        posteriors: Posteriors {
            nonnull: pl.unpermute(&post.nonnull),
            second: pl.unpermute(&post.second),
        },
        trace: EmTrace {
            iterations: vec![EmIteration {
                params: *params,
                loglik,
                max_posterior_change: T::zero(),
            }],
            notes: Vec::new(),
        },
        converged: true,
    })
}

fn run_em<T: Real>(pl: &Plugin<T>, init: MixtureParams<T>, config: &EmConfig<T>) -> (Posteriors<T>, EmTrace<T>, bool) {
    let mut params = init;
    let (mut post, mut ll) = e_step_plugin(pl, &params);
    let mut trace = EmTrace {
        iterations: vec![EmIteration {
            params,
            loglik: ll,
            max_posterior_change: T::infinity(),
        }],
        notes: Vec::new(),
    };
    let mut converged = false;
    let mut notes = Vec::new();
    for iter in 1..=config.max_iters {
        let next = m_step_plugin(pl, &post, &params, config.components, &mut notes);
        for MStepNote::RootFallback(msg) in notes.drain(..) {
            trace.notes.push(format!("iteration {iter}: spread root fallback to 0 ({msg})"));
        }
        let (next_post, next_ll) = e_step_plugin(pl, &next);
        let change = next_post.max_abs_diff(&post);
        trace.iterations.push(EmIteration {
            params: next,
            loglik: next_ll,
            max_posterior_change: change,
        });
        let rel = (next_ll - ll).abs() / ll.abs().max(T::min_positive_value());
        params = next;
        post = next_post;
        ll = next_ll;
        if rel < config.tol && change < config.posterior_tol {
            converged = true;
            break;
        }
    }
    (post, trace, converged)
}

/// Sequence of mixing proportions produced by the EM update when the gene
/// effects are fixed (FR, FF, FH).
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTrace<T> {
    pub p1: Vec<T>,
    pub tau: Vec<T>,
}

/// Runs the fixed-effect EM recursion for the mixing proportion.
///
/// With a free mean per gene the non-null density sits at its mode, so
/// `p1' = mean_g p1 / (p0 exp(-(d_g - tau)^2 / 2 s_g) + p1)`, which exceeds
/// `p1` whenever any gene has `d_g != tau`. Iterates until `p1 > 1 - 1e-9`
/// or `max_iters` updates.
pub fn fixed_effect_divergence<T: Real>(
    summaries: &GeneSummaries<T>,
    prior: &VariancePrior<T>,
    kind: ModelKind,
    p1_start: T,
    max_iters: usize,
) -> Result<DivergenceTrace<T>> {
    if kind.is_random_mean() {
        return Err(Error::InvalidInput(format!("{kind} is a random-mean model; use fit")));
    }
    if !(p1_start > T::zero() && p1_start < T::one()) {
        return Err(Error::Domain(format!("starting p1 must be in (0, 1), got {p1_start}")));
    }
    let pl = Plugin::new(summaries, prior, kind)?;
    let n = pl.len();
    let nt = T::from_count(n);
    let mut p1 = p1_start;
    let mut tau = median(&pl.d);
    let mut out = DivergenceTrace {
        p1: vec![p1],
        tau: vec![tau],
    };
    let stop = T::one() - T::lit(1e-9);
    for _ in 0..max_iters {
        if p1 > stop {
            break;
        }
        let p0 = T::one() - p1;
        let mut sum_p1 = T::zero();
        let (mut num, mut den) = (T::zero(), T::zero());
        for g in 0..n {
            let r = pl.d[g] - tau;
            let e = (-(r * r) / (T::lit(2.0) * pl.s[g])).exp();
            let denom = p0 * e + p1;
            sum_p1 = sum_p1 + p1 / denom;
            let p0g = p0 * e / denom;
            num = num + p0g * pl.d[g] / pl.s[g];
            den = den + p0g / pl.s[g];
        }
        p1 = (sum_p1 / nt).min(T::one());
        if den > T::zero() {
            tau = num / den;
        }
        out.p1.push(p1);
        out.tau.push(tau);
    }
    Ok(out)
}

/// Complete-data likelihood of one gene with its membership fixed, under the
/// Laplace approximation of the variance integral.
///
/// `component` is 0 (null), 1 (mean `tau + psi`) or 2 (mean `tau - psi`);
/// `var_factor` is `1/n1 + 1/n2`. The error-variance integral is expanded
/// about the posterior mode `s~` of `sigma_eps^2` given `m`, using the
/// curvature of the log of `L(m; s) p(1/s) / s^2`, the integrand on the
/// variance scale. Additive (`SigmaPsi2`) spread only.
pub fn laplace_gene_likelihood<T: Real>(
    d: T,
    m: T,
    f: u32,
    var_factor: T,
    component: usize,
    params: &MixtureParams<T>,
    prior: &VariancePrior<T>,
) -> Result<T> {
    let sigma_psi2 = match params.spread {
        EffectSpread::SigmaPsi2(x) => x,
        EffectSpread::V0(_) => {
            return Err(Error::InvalidInput("Laplace contribution is defined for additive spread".into()))
        }
    };
    if component > 2 {
        return Err(Error::Domain(format!("component must be 0, 1 or 2, got {component}")));
    }
    if !(m > T::zero()) {
        return Err(Error::Domain("m must be positive".into()));
    }
    let two = T::lit(2.0);
    let h = T::from_u32(f).expect("u32 representable") / two;
    let (alpha, beta) = (prior.alpha, prior.beta);
    let shape = h + alpha + T::one();
    let rate = m * h + T::one() / beta;
    let s = rate / shape;
    // log L(m; s): Gamma(f/2, scale 2 s / f) density of m
    let ln_lm = (h - T::one()) * m.ln() - h * (s / h).ln() - h.ln_gamma() - m * h / s;
    // log p(x) at x = 1/s: Gamma(alpha, scale beta) density of the precision
    let x = T::one() / s;
    let ln_px = (alpha - T::one()) * x.ln() - x / beta - alpha.ln_gamma() - alpha * beta.ln();
    let ln_jac = -two * s.ln();
    let ln_curv = (two * T::PI() * rate * rate / (shape * shape * shape)).ln() / two;
    let var_d = s * var_factor;
    let ln_ld = match component {
        0 => ln_prob(params.p0()) + ln_normal_pdf(d, params.tau, var_d),
        1 => ln_prob(params.p1) + ln_normal_pdf(d, params.tau + params.psi, sigma_psi2 + var_d),
        _ => ln_prob(params.p2) + ln_normal_pdf(d, params.tau - params.psi, sigma_psi2 + var_d),
    };
    Ok((ln_ld + ln_lm + ln_px + ln_jac + ln_curv).exp())
}
