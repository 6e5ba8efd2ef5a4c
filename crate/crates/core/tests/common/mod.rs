//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ebmix_core::simulation::{generate, SimScenario};
use ebmix_core::{summarize, EffectSpread, GeneSummaries, MixtureParams, VariancePrior};

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + z * z / var)
}

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let n = 64;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol / n as f64, 40)
        })
        .sum()
}

/// `ln ∫ exp(ln_f(x)) dx` over `x > 0`, integrating on `u = ln x` around the
/// peak of the integrand until it has fallen by `e^-60` on both sides.
pub fn ln_integral_positive<F: Fn(f64) -> f64>(ln_f: F, x_guess: f64) -> f64 {
    let g = |u: f64| ln_f(u.exp()) + u;
    // Coarse scan for the peak, then golden-section refinement.
    let u0 = x_guess.ln();
    let mut best = (u0, g(u0));
    for k in -400..=400 {
        let u = u0 + k as f64 * 0.05;
        let v = g(u);
        if v > best.1 {
            best = (u, v);
        }
    }
    let (mut a, mut b) = (best.0 - 0.05, best.0 + 0.05);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (c, d) = (b - phi * (b - a), a + phi * (b - a));
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let peak = 0.5 * (a + b);
    let top = g(peak);
    let mut lo = peak;
    while g(lo) - top > -60.0 {
        lo -= 0.25;
    }
    let mut hi = peak;
    while g(hi) - top > -60.0 {
        hi += 0.25;
    }
    let scaled = |u: f64| (g(u) - top).exp();
    top + integrate(scaled, lo, hi, 1e-13).ln()
}

/// The complete-data likelihood of one gene with membership fixed, with the
/// error variance integrated out numerically over its gamma-distributed
/// precision.
pub fn complete_likelihood_quadrature(
    d: f64,
    m: f64,
    f: u32,
    var_factor: f64,
    component: usize,
    params: &MixtureParams<f64>,
    prior: &VariancePrior<f64>,
) -> f64 {
    let EffectSpread::SigmaPsi2(sp) = params.spread else {
        panic!("additive spread only")
    };
    let h = f as f64 / 2.0;
    let (alpha, beta) = (prior.alpha, prior.beta);
    let (weight, mean, extra) = match component {
        0 => (1.0 - params.p1 - params.p2, params.tau, 0.0),
        1 => (params.p1, params.tau + params.psi, sp),
        _ => (params.p2, params.tau - params.psi, sp),
    };
    let ln_f = |x: f64| {
        let s2 = 1.0 / x;
        let ln_d = ln_normal(d, mean, extra + s2 * var_factor);
        let ln_m = (h - 1.0) * m.ln() - h * (s2 / h).ln() - ln_gamma(h) - m * h / s2;
        let ln_p = (alpha - 1.0) * x.ln() - x / beta - ln_gamma(alpha) - alpha * beta.ln();
        ln_d + ln_m + ln_p
    };
    let guess = (h + alpha - 1.0) / (m * h + 1.0 / beta);
    weight * ln_integral_positive(ln_f, guess).exp()
}

/// Posterior mode of the error variance, written out directly.
pub fn posterior_mode(m: f64, f: u32, prior: &VariancePrior<f64>) -> f64 {
    let h = f as f64 / 2.0;
    h / (h + prior.alpha + 1.0) * m + (prior.alpha + 1.0) / (h + prior.alpha + 1.0) / ((prior.alpha + 1.0) * prior.beta)
}

/// Approximate marginal log-likelihood of a two- or three-component fit
/// with the posterior-mode plug-in and additive spread.
pub fn approx_loglik(s: &GeneSummaries<f64>, prior: &VariancePrior<f64>, p: &MixtureParams<f64>) -> f64 {
    let sp = p.spread.value();
    (0..s.len())
        .map(|g| {
            let v = posterior_mode(s.m()[g], s.f()[g], prior) * s.var_factor(g);
            let d = s.d()[g];
            let mut total = (1.0 - p.p1 - p.p2) * ln_normal(d, p.tau, v).exp();
            total += p.p1 * ln_normal(d, p.tau + p.psi, sp + v).exp();
            if p.p2 > 0.0 {
                total += p.p2 * ln_normal(d, p.tau - p.psi, sp + v).exp();
            }
            total.ln()
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct GridResult {
    pub best: [f64; 4],
    pub loglik: f64,
    /// Cell width per dimension at the final level.
    pub cell: [f64; 4],
}

/// Exhaustive search over `(p1, tau, psi, sigma_psi2)`: a full grid of
/// `n0` points per dimension, then `zooms` finer grids of `n` points
/// spanning two cells either side of the previous best.
pub fn grid_search(
    s: &GeneSummaries<f64>,
    prior: &VariancePrior<f64>,
    lower: [f64; 4],
    upper: [f64; 4],
    n0: usize,
    n: usize,
    zooms: usize,
) -> GridResult {
    let eval = |x: [f64; 4]| {
        let p = MixtureParams::two_group(x[0], x[1], x[2], EffectSpread::SigmaPsi2(x[3]));
        approx_loglik(s, prior, &p)
    };
    let mut lo = lower;
    let mut hi = upper;
    let mut pts = n0;
    let mut best = ([0.0; 4], f64::NEG_INFINITY);
    let mut cell = [0.0; 4];
    for level in 0..=zooms {
        for j in 0..4 {
            cell[j] = (hi[j] - lo[j]) / (pts - 1) as f64;
        }
        let axis = |j: usize, k: usize| lo[j] + k as f64 * cell[j];
        for a in 0..pts {
            for b in 0..pts {
                for c in 0..pts {
                    for e in 0..pts {
                        let x = [axis(0, a), axis(1, b), axis(2, c), axis(3, e)];
                        let v = eval(x);
                        if v > best.1 {
                            best = (x, v);
                        }
                    }
                }
            }
        }
        if level < zooms {
            for j in 0..4 {
                lo[j] = (best.0[j] - 2.0 * cell[j]).max(lower[j]);
                hi[j] = (best.0[j] + 2.0 * cell[j]).min(upper[j]);
            }
            pts = n;
        }
    }
    GridResult {
        best: best.0,
        loglik: best.1,
        cell,
    }
}

/// Two-group summaries from the LEMMA generator.
pub fn lemma_summaries(genes: usize, p1: f64, psi: f64, seed: u64) -> GeneSummaries<f64> {
    let scenario = SimScenario {
        genes,
        seed,
        ..SimScenario::lemma_low(psi, p1)
    };
    summarize(&generate(&scenario, 0).unwrap().matrix).unwrap()
}

/// Pooled within-group mean squared error by explicit loops.
pub fn naive_pooled_mse(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| {
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        s / v.len() as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let mut sse = 0.0;
    for x in a {
        sse += (x - ma) * (x - ma);
    }
    for x in b {
        sse += (x - mb) * (x - mb);
    }
    sse / (a.len() + b.len() - 2) as f64
}
