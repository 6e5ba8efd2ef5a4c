//! Random-mean mixture for `t >= 2` treatment groups on an orthonormal
//! contrast scale.
//!
//! Each gene is summarized by `d_g = H ybar_g` (dimension `t - 1`). Under the
//! null `d_g ~ N(H tau, L0_g)` with `L0_g = e_g H diag(1/n_g) H'`; non-null
//! genes follow `N(H tau + H psi, L0_g + x I)` with `x = sigma_psi2`. Since
//! `L0_g` and `L0_g + x I` share eigenvectors, all per-gene algebra runs in
//! the eigenbasis of `H diag(1/n_g) H'`, which depends only on group sizes.
//!
//! Small dense solves and the eigendecompositions use nalgebra in `f64`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExpressionMatrix;
use crate::optim::{nonnegative_root, RootError};
use crate::prior::{posterior_mode_variance, VariancePrior};
use crate::real::{log_add_exp, mean_var, median, Real};

const ORTHO_TOL: f64 = 1e-10;

/// Orthonormal contrasts: `(t - 1)` rows of length `t`, each summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastMatrix<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> ContrastMatrix<T> {
    /// Helmert contrasts: row `k` has `k` entries `1/sqrt(k(k+1))`, then
    /// `-k/sqrt(k(k+1))`, then zeros.
    pub fn helmert(t: usize) -> Result<Self> {
        if t < 2 {
            return Err(Error::Domain(format!("contrasts need at least 2 groups, got {t}")));
        }
        let rows = (1..t)
            .map(|k| {
                let kt = T::from_count(k);
                let scale = (kt * (kt + T::one())).sqrt();
                (0..t)
                    .map(|j| match j.cmp(&k) {
                        std::cmp::Ordering::Less => T::one() / scale,
                        std::cmp::Ordering::Equal => -kt / scale,
                        std::cmp::Ordering::Greater => T::zero(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { rows })
    }

    /// User-supplied contrasts; rejected unless rows sum to zero and are orthonormal.
    pub fn custom(rows: Vec<Vec<T>>) -> Result<Self> {
        let t = rows.len() + 1;
        if t < 2 {
            return Err(Error::Domain("contrast matrix has no rows".into()));
        }
        if let Some(k) = rows.iter().position(|r| r.len() != t) {
            return Err(Error::Structure(format!(
                "contrast row {} has {} entries, expected {t}",
                k + 1,
                rows[k].len()
            )));
        }
        let tol = T::lit(ORTHO_TOL);
        for (k, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("contrast row {} is not finite", k + 1)));
            }
            if r.iter().copied().sum::<T>().abs() > tol {
                return Err(Error::Domain(format!("contrast row {} does not sum to zero", k + 1)));
            }
        }
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let dot: T = rows[i].iter().zip(&rows[j]).map(|(&a, &b)| a * b).sum();
                let target = if i == j { T::one() } else { T::zero() };
                if (dot - target).abs() > tol {
                    return Err(Error::Domain(format!(
                        "contrast rows {} and {} are not orthonormal",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Number of treatment groups `t`.
    pub fn n_groups(&self) -> usize {
        self.rows.len() + 1
    }

    /// Contrast dimension `t - 1`.
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `H x` for a length-`t` vector.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.rows.iter().map(|r| r.iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `H' y` for a length-`(t-1)` vector: the sum-to-zero `t`-vector with contrasts `y`.
    pub fn transpose_apply(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_groups()];
        for (r, &yk) in self.rows.iter().zip(y) {
            for (o, &h) in out.iter_mut().zip(r) {
                *o = *o + h * yk;
            }
        }
        out
    }

    /// `H diag(w) H'`.
    fn weighted_gram(&self, w: &[T]) -> Vec<Vec<T>> {
        let k = self.dim();
        let mut out = vec![vec![T::zero(); k]; k];
        for i in 0..k {
            for j in 0..k {
                out[i][j] = (0..self.n_groups()).map(|c| self.rows[i][c] * w[c] * self.rows[j][c]).sum();
            }
        }
        out
    }
}

/// Per-gene contrast vectors and pooled mean squared errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSummaries<T> {
    gene_ids: Vec<String>,
    d: Vec<Vec<T>>,
    m: Vec<T>,
    f: Vec<u32>,
    n: Vec<Vec<u32>>,
    contrast: ContrastMatrix<T>,
}

impl<T: Real> VectorSummaries<T> {
    pub fn from_parts(
        gene_ids: Vec<String>,
        d: Vec<Vec<T>>,
        m: Vec<T>,
        n: Vec<Vec<u32>>,
        contrast: ContrastMatrix<T>,
    ) -> Result<Self> {
        let g = gene_ids.len();
        if g == 0 {
            return Err(Error::InvalidInput("no genes".into()));
        }
        if d.len() != g || m.len() != g || n.len() != g {
            return Err(Error::Structure("summary vectors differ in length".into()));
        }
        let t = contrast.n_groups();
        let mut f = Vec::with_capacity(g);
        let mut short = Vec::new();
        for i in 0..g {
            if d[i].len() != t - 1 || n[i].len() != t {
                return Err(Error::Structure(format!("gene {} has the wrong dimension", gene_ids[i])));
            }
            if d[i].iter().any(|v| !v.is_finite()) || !(m[i] >= T::zero()) || !m[i].is_finite() {
                return Err(Error::InvalidInput(format!("gene {} has invalid summaries", gene_ids[i])));
            }
            if n[i].contains(&0) {
                return Err(Error::InvalidInput(format!("gene {} has an empty group", gene_ids[i])));
            }
            let total: u32 = n[i].iter().sum();
            if total <= t as u32 {
                short.push(gene_ids[i].clone());
                f.push(0);
            } else {
                f.push(total - t as u32);
            }
        }
        if !short.is_empty() {
            return Err(Error::InsufficientReplicates { genes: short });
        }
        Ok(Self {
            gene_ids,
            d,
            m,
            f,
            n,
            contrast,
        })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn d(&self) -> &[Vec<T>] {
        &self.d
    }

    pub fn m(&self) -> &[T] {
        &self.m
    }

    pub fn f(&self) -> &[u32] {
        &self.f
    }

    pub fn n(&self) -> &[Vec<u32>] {
        &self.n
    }

    pub fn contrast(&self) -> &ContrastMatrix<T> {
        &self.contrast
    }
}

/// Contrast vectors `H ybar_g` and pooled MSE with `f_g = sum_i n_ig - t`.
pub fn summarize_multi<T: Real>(data: &ExpressionMatrix<T>, contrast: &ContrastMatrix<T>) -> Result<VectorSummaries<T>> {
    let t = data.n_groups();
    if t != contrast.n_groups() {
        return Err(Error::Structure(format!(
            "data have {t} groups but the contrast matrix expects {}",
            contrast.n_groups()
        )));
    }
    let sizes: Vec<u32> = data.group_sizes().iter().map(|&c| c as u32).collect();
    let total: u32 = sizes.iter().sum();
    if total <= t as u32 {
        return Err(Error::InsufficientReplicates {
            genes: data.gene_ids().to_vec(),
        });
    }
    let f = T::from_u32(total - t as u32).expect("u32 representable");
    let g = data.n_genes();
    let mut d = Vec::with_capacity(g);
    let mut m = Vec::with_capacity(g);
    for gene in 0..g {
        let (means, sse) = data.group_means_and_sse(gene);
        d.push(contrast.apply(&means));
        m.push(sse / f);
    }
    VectorSummaries::from_parts(data.gene_ids().to_vec(), d, m, vec![sizes; g], contrast.clone())
}

/// Parameters on the contrast scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorMixtureParams<T> {
    pub p1: T,
    /// `H tau`.
    pub h_tau: Vec<T>,
    /// `H psi`.
    pub h_psi: Vec<T>,
    pub sigma_psi2: T,
}

impl<T: Real> VectorMixtureParams<T> {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.p1 >= T::zero() && self.p1 <= T::one()) {
            return Err(Error::Domain(format!("p1 must lie in [0, 1], got {}", self.p1)));
        }
        if self.h_tau.len() != dim || self.h_psi.len() != dim {
            return Err(Error::Structure(format!("parameter vectors must have length {dim}")));
        }
        if self.h_tau.iter().chain(&self.h_psi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        if !(self.sigma_psi2 >= T::zero()) || !self.sigma_psi2.is_finite() {
            return Err(Error::Domain(format!("sigma_psi2 must be nonnegative, got {}", self.sigma_psi2)));
        }
        Ok(())
    }

    /// Sum-to-zero `t`-vector of treatment effects, `H' (H psi)`.
    pub fn psi_vec(&self, contrast: &ContrastMatrix<T>) -> Vec<T> {
        contrast.transpose_apply(&self.h_psi)
    }

    /// Centred `t`-vector of baseline means, `H' (H tau)`; the overall level is not estimable.
    pub fn tau_vec(&self, contrast: &ContrastMatrix<T>) -> Vec<T> {
        contrast.transpose_apply(&self.h_tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiConfig<T> {
    pub max_iters: usize,
    pub tol: T,
    pub posterior_tol: T,
}

impl<T: Real> Default for MultiConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: T::lit(1e-8),
            posterior_tol: T::lit(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIteration<T> {
    pub params: VectorMixtureParams<T>,
    pub loglik: T,
    pub max_posterior_change: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFitResult<T> {
    pub params: VectorMixtureParams<T>,
    pub prior: VariancePrior<T>,
    /// Posterior-mode error variance per gene.
    pub error_var: Vec<T>,
    pub posterior_nonnull: Vec<T>,
    pub trace: Vec<MultiIteration<T>>,
    pub notes: Vec<String>,
    pub converged: bool,
}

impl<T: Real> MultiFitResult<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn loglik(&self) -> T {
        self.trace.last().map(|it| it.loglik).unwrap_or(T::nan())
    }
}

/// Eigendecomposition of `H diag(1/n) H'` for one group-size pattern.
#[derive(Debug, Clone)]
struct Basis<T> {
    /// Eigenvectors as rows, so `z = U' r` is `vectors[k] . r`.
    vectors: Vec<Vec<T>>,
    values: Vec<T>,
}

impl<T: Real> Basis<T> {
    fn new(contrast: &ContrastMatrix<T>, n: &[u32]) -> Result<Self> {
        let w: Vec<T> = n.iter().map(|&c| T::one() / T::from_u32(c).expect("u32")).collect();
        let gram = contrast.weighted_gram(&w);
        let k = gram.len();
        let mat = DMatrix::from_fn(k, k, |i, j| gram[i][j].as_f64());
        let eig = SymmetricEigen::new(mat);
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Structure("null covariance is singular".into()));
        }
        let vectors = (0..k)
            .map(|c| (0..k).map(|r| T::lit(eig.eigenvectors[(r, c)])).collect())
            .collect();
        let values = eig.eigenvalues.iter().map(|&v| T::lit(v)).collect();
        Ok(Self { vectors, values })
    }

    fn rotate(&self, r: &[T]) -> Vec<T> {
        self.vectors.iter().map(|u| u.iter().zip(r).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `U diag(scale) U'` as an `f64` matrix.
    fn compose(&self, scale: impl Fn(usize) -> T) -> DMatrix<f64> {
        let k = self.values.len();
        let mut out = DMatrix::zeros(k, k);
        for (c, u) in self.vectors.iter().enumerate() {
            let s = scale(c).as_f64();
            for i in 0..k {
                for j in 0..k {
                    out[(i, j)] += u[i].as_f64() * s * u[j].as_f64();
                }
            }
        }
        out
    }
}

/// Per-gene inputs in canonical order.
#[derive(Debug, Clone)]
struct Design<T> {
    order: Vec<usize>,
    d: Vec<Vec<T>>,
    e: Vec<T>,
    basis_of: Vec<usize>,
    bases: Vec<Basis<T>>,
    dim: usize,
}

impl<T: Real> Design<T> {
    fn new(vs: &VectorSummaries<T>, prior: &VariancePrior<T>) -> Result<Self> {
        let mut order: Vec<usize> = (0..vs.len()).collect();
        order.sort_by(|&i, &j| {
            let key = vs.d[i]
                .iter()
                .zip(&vs.d[j])
                .map(|(a, b)| a.partial_cmp(b).expect("finite"))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal);
            key.then(vs.m[i].partial_cmp(&vs.m[j]).expect("finite"))
                .then(vs.f[i].cmp(&vs.f[j]))
                .then(vs.n[i].cmp(&vs.n[j]))
        });
        let mut patterns: HashMap<&[u32], usize> = HashMap::new();
        let mut bases = Vec::new();
        let mut basis_of = Vec::with_capacity(order.len());
        for &i in &order {
            let next = bases.len();
            let idx = *patterns.entry(vs.n[i].as_slice()).or_insert(next);
            if idx == next {
                bases.push(Basis::new(&vs.contrast, &vs.n[i])?);
            }
            basis_of.push(idx);
        }
        Ok(Self {
            d: order.iter().map(|&i| vs.d[i].clone()).collect(),
            e: order.iter().map(|&i| posterior_mode_variance(vs.m[i], vs.f[i], prior)).collect(),
            order,
            basis_of,
            bases,
            dim: vs.contrast.dim(),
        })
    }

    fn len(&self) -> usize {
        self.d.len()
    }

    fn basis(&self, g: usize) -> &Basis<T> {
        &self.bases[self.basis_of[g]]
    }

    /// Null-covariance eigenvalues of gene `g`.
    fn null_eigs(&self, g: usize) -> impl Iterator<Item = T> + '_ {
        let e = self.e[g];
        self.basis(g).values.iter().map(move |&v| e * v)
    }

    fn unpermute(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    fn resid(&self, g: usize, centre: &[T]) -> Vec<T> {
        let r: Vec<T> = self.d[g].iter().zip(centre).map(|(&a, &b)| a - b).collect();
        self.basis(g).rotate(&r)
    }

    /// Log density of `N(0, diag(eigs))` at rotated residual `z`.
    fn ln_density(z: &[T], eigs: impl Iterator<Item = T>) -> T {
        let ln2pi = (T::lit(2.0) * T::PI()).ln();
        let mut acc = T::zero();
        for (&zk, lk) in z.iter().zip(eigs) {
            acc = acc + ln2pi + lk.ln() + zk * zk / lk;
        }
        -acc / T::lit(2.0)
    }

    /// `(ln f0, ln f1)` for gene `g`.
    fn ln_densities(&self, g: usize, p: &VectorMixtureParams<T>) -> (T, T) {
        let xi: Vec<T> = p.h_tau.iter().zip(&p.h_psi).map(|(&a, &b)| a + b).collect();
        let z0 = self.resid(g, &p.h_tau);
        let z1 = self.resid(g, &xi);
        let x = p.sigma_psi2;
        (
            Self::ln_density(&z0, self.null_eigs(g)),
            Self::ln_density(&z1, self.null_eigs(g).map(|l| l + x)),
        )
    }
}

fn e_step<T: Real>(ds: &Design<T>, p: &VectorMixtureParams<T>) -> (Vec<T>, T) {
    let lp0 = if p.p1 < T::one() { (T::one() - p.p1).ln() } else { T::neg_infinity() };
    let lp1 = if p.p1 > T::zero() { p.p1.ln() } else { T::neg_infinity() };
    let per: Vec<(T, T)> = (0..ds.len())
        .into_par_iter()
        .map(|g| {
            let (l0, l1) = ds.ln_densities(g, p);
            let w0 = lp0 + l0;
            let w1 = if lp1 == T::neg_infinity() { lp1 } else { lp1 + l1 };
            let total = log_add_exp(w0, w1);
            let post = if w1 == T::neg_infinity() { T::zero() } else { (w1 - total).exp() };
            (post, total)
        })
        .collect();
    let ll = per.iter().fold(T::zero(), |a, t| a + t.1);
    (per.into_iter().map(|t| t.0).collect(), ll)
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<Vec<f64>> {
    a.cholesky().map(|c| c.solve(&b).iter().copied().collect())
}

fn m_step<T: Real>(ds: &Design<T>, post: &[T], prev: &VectorMixtureParams<T>, notes: &mut Vec<String>) -> VectorMixtureParams<T> {
    let n = ds.len();
    let k = ds.dim;
    let p1 = post.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(n);
    let x_prev = prev.sigma_psi2;

    // H tau: precision-weighted mean of d over the null posteriors.
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for g in 0..n {
        let w = (T::one() - post[g]).max(T::zero());
        if w == T::zero() {
            continue;
        }
        let e = ds.e[g];
        let prec = ds.basis(g).compose(|c| w / (e * ds.basis(g).values[c]));
        let dg = DVector::from_iterator(k, ds.d[g].iter().map(|v| v.as_f64()));
        b += &prec * dg;
        a += prec;
    }
    let h_tau = solve(a, b).map(|v| v.into_iter().map(T::lit).collect()).unwrap_or_else(|| prev.h_tau.clone());

    // H psi given the previous spread.
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for g in 0..n {
        if post[g] == T::zero() {
            continue;
        }
        let e = ds.e[g];
        let basis = ds.basis(g);
        let prec = basis.compose(|c| post[g] / (e * basis.values[c] + x_prev));
        let r = DVector::from_iterator(k, ds.d[g].iter().zip(&h_tau).map(|(&d, &t)| (d - t).as_f64()));
        b += &prec * r;
        a += prec;
    }
    let Some(h_psi) = solve(a, b) else {
        return VectorMixtureParams {
            p1,
            h_tau,
            h_psi: vec![T::zero(); k],
            sigma_psi2: T::zero(),
        };
    };
    let h_psi: Vec<T> = h_psi.into_iter().map(T::lit).collect();

    // Spread: root of the trace equation, in each gene's eigenbasis.
    let xi: Vec<T> = h_tau.iter().zip(&h_psi).map(|(&a, &b)| a + b).collect();
    let z: Vec<Vec<T>> = (0..n).map(|g| ds.resid(g, &xi)).collect();
    let h = |x: T| -> T {
        let mut acc = T::zero();
        for g in 0..n {
            if post[g] == T::zero() {
                continue;
            }
            let mut s = T::zero();
            for (zk, l) in z[g].iter().zip(ds.null_eigs(g)) {
                let v = l + x;
                s = s + (v - *zk * *zk) / (v * v);
            }
            acc = acc + post[g] * s;
        }
        acc
    };
    let q = |x: T| -> T {
        let mut acc = T::zero();
        for g in 0..n {
            let mut s = T::zero();
            for (zk, l) in z[g].iter().zip(ds.null_eigs(g)) {
                let v = l + x;
                s = s + v.ln() + *zk * *zk / v;
            }
            acc = acc - post[g] * s;
        }
        acc
    };
    let kt = T::from_count(k);
    let var_d = (0..k)
        .map(|c| mean_var(&ds.d.iter().map(|v| v[c]).collect::<Vec<_>>()).1)
        .fold(T::zero(), |a, v| a + v)
        / kt;
    let upper = (T::lit(10.0) * var_d).max(T::lit(1e-8));
    let mut x = match nonnegative_root(h, upper, T::min_positive_value()) {
        Ok(Some(x)) => x,
        Ok(None) => T::zero(),
        Err(err) => {
            let msg = match err {
                RootError::NoSignChange { b, .. } => format!("no sign change up to {b}"),
                RootError::NotFinite { x, fx } => format!("non-finite value {fx} at {x}"),
                RootError::MaxIter { best } => format!("iteration limit near {best}"),
            };
            notes.push(format!("spread root fallback to 0 ({msg})"));
            T::zero()
        }
    };
    if q(x_prev) > q(x) {
        x = x_prev;
    }
    VectorMixtureParams {
        p1,
        h_tau,
        h_psi,
        sigma_psi2: x,
    }
}

/// Same starting rule as the scalar fit, on the contrast scale: the spread
/// floor is halved so that `t = 2` matches the scalar start exactly.
fn auto_init<T: Real>(ds: &Design<T>) -> VectorMixtureParams<T> {
    let n = ds.len();
    let k = ds.dim;
    let h_tau: Vec<T> = (0..k).map(|c| median(&ds.d.iter().map(|v| v[c]).collect::<Vec<_>>())).collect();
    let dist = |g: usize| -> T { ds.d[g].iter().zip(&h_tau).map(|(&a, &b)| (a - b) * (a - b)).sum() };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| dist(j).partial_cmp(&dist(i)).expect("finite").then(i.cmp(&j)));
    let top = (((n as f64) * 0.05).ceil().max(1.0) as usize).min(n);
    let top = &idx[..top];
    let kt = T::from_count(k);
    let mut h_psi = Vec::with_capacity(k);
    let mut var_top = T::zero();
    for c in 0..k {
        let vals: Vec<T> = top.iter().map(|&g| ds.d[g][c]).collect();
        let (m, v) = mean_var(&vals);
        h_psi.push(m - h_tau[c]);
        var_top = var_top + v;
    }
    var_top = var_top / kt;
    let mean_s = top.iter().map(|&g| ds.null_eigs(g).sum::<T>() / kt).sum::<T>() / T::from_count(top.len());
    VectorMixtureParams {
        p1: T::lit(0.05),
        h_tau,
        h_psi,
        sigma_psi2: (var_top - mean_s).max(T::lit(0.005)),
    }
}

/// EM fit of the multi-treatment mixture (posterior-mode error variances).
pub fn fit_multi<T: Real>(
    vs: &VectorSummaries<T>,
    prior: &VariancePrior<T>,
    init: Option<VectorMixtureParams<T>>,
    config: &MultiConfig<T>,
) -> Result<MultiFitResult<T>> {
    if config.max_iters == 0 || !(config.tol > T::zero()) || !(config.posterior_tol > T::zero()) {
        return Err(Error::InvalidInput("invalid EM configuration".into()));
    }
    let ds = Design::new(vs, prior)?;
    let mut params = match init {
        Some(p) => {
            p.validate(ds.dim)?;
            p
        }
        None => auto_init(&ds),
    };
    let (mut post, mut ll) = e_step(&ds, &params);
    let mut trace = vec![MultiIteration {
        params: params.clone(),
        loglik: ll,
        max_posterior_change: T::infinity(),
    }];
    let mut notes = Vec::new();
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let mut step_notes = Vec::new();
        let next = m_step(&ds, &post, &params, &mut step_notes);
        notes.extend(step_notes.into_iter().map(|s| format!("iteration {iter}: {s}")));
        let (next_post, next_ll) = e_step(&ds, &next);
        let change = next_post.iter().zip(&post).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let rel = (next_ll - ll).abs() / ll.abs().max(T::min_positive_value());
        trace.push(MultiIteration {
            params: next.clone(),
            loglik: next_ll,
            max_posterior_change: change,
        });
        params = next;
        post = next_post;
        ll = next_ll;
        if rel < config.tol && change < config.posterior_tol {
            converged = true;
            break;
        }
    }
    Ok(MultiFitResult {
        params,
        prior: *prior,
        error_var: ds.unpermute(&ds.e),
        posterior_nonnull: ds.unpermute(&post),
        trace,
        notes,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLr<T> {
    /// `f0(d_g) / f1(d_g)`.
    pub lr: Vec<T>,
    /// `p1 / (p1 + p0 lr)`.
    pub posterior_nonnull: Vec<T>,
}

/// Per-gene likelihood ratios from the multivariate densities.
pub fn lrt_multi<T: Real>(vs: &VectorSummaries<T>, fit: &MultiFitResult<T>) -> Result<MultiLr<T>> {
    fit.params.validate(vs.contrast.dim())?;
    let ds = Design::new(vs, &fit.prior)?;
    let p = &fit.params;
    let mut lr = vec![T::zero(); ds.len()];
    let mut post = vec![T::zero(); ds.len()];
    for g in 0..ds.len() {
        let (l0, l1) = ds.ln_densities(g, p);
        lr[g] = (l0 - l1).exp();
        let w0 = if p.p1 < T::one() { (T::one() - p.p1).ln() + l0 } else { T::neg_infinity() };
        post[g] = if p.p1 > T::zero() {
            let w1 = p.p1.ln() + l1;
            (w1 - log_add_exp(w0, w1)).exp()
        } else {
            T::zero()
        };
    }
    Ok(MultiLr {
        lr: ds.unpermute(&lr),
        posterior_nonnull: ds.unpermute(&post),
    })
}

/// Likelihood ratio through the shrinkage form
/// `|I - L|^(-1/2) exp(-G' L0^-1 L^-1 G / 2) exp(|H psi|^2 / (2 x))`, with
/// `L = (L0 + x I)^-1 x` and `G = L (d - H tau) + (I - L) H psi`.
/// Requires `sigma_psi2 > 0`.
pub fn lr_shrinkage_form<T: Real>(vs: &VectorSummaries<T>, fit: &MultiFitResult<T>) -> Result<Vec<T>> {
    let p = &fit.params;
    p.validate(vs.contrast.dim())?;
    if !(p.sigma_psi2 > T::zero()) {
        return Err(Error::Domain("shrinkage form needs sigma_psi2 > 0".into()));
    }
    let ds = Design::new(vs, &fit.prior)?;
    let x = p.sigma_psi2;
    let two = T::lit(2.0);
    let psi_sq: T = p.h_psi.iter().map(|&v| v * v).sum();
    let out: Vec<T> = (0..ds.len())
        .map(|g| {
            let z = ds.resid(g, &p.h_tau);
            let w = ds.basis(g).rotate(&p.h_psi);
            let mut ln = psi_sq / (two * x);
            for ((&zk, &wk), l0) in z.iter().zip(&w).zip(ds.null_eigs(g)) {
                let shrink = x / (l0 + x);
                let rest = l0 / (l0 + x);
                let gamma = shrink * zk + rest * wk;
                ln = ln - rest.ln() / two - gamma * gamma / (two * l0 * shrink);
            }
            ln.exp()
        })
        .collect();
    Ok(ds.unpermute(&out))
}
