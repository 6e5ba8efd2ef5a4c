//! Monte-Carlo harness: data generation under the LEMMA and LIMMA schemes,
//! the oracle classifier, empirical-quantile power and accuracy/FDR curves.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{e_step, evaluate, fit, EmConfig, Posteriors};
use crate::error::{Error, Result};
use crate::inference::{fixed_effect_statistics, likelihood_ratio};
use crate::model::{summarize, Components, EffectSpread, ExpressionMatrix, GeneSummaries, MixtureParams, ModelKind};
use crate::prior::{fit_variance_prior, PriorMethod, VariancePrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// `psi_g ~ N(psi, sigma_psi2)` independent of the error variance.
    Lemma,
    /// `psi_g ~ N(psi, v0 sigma_eps_g^2)`.
    Limma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceLaw {
    /// `1 / sigma_eps^2 ~ Gamma(alpha, scale beta)`.
    InverseGamma,
    /// Log-normal with the same mean and variance as the inverse gamma.
    LogNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub generator: Generator,
    pub genes: usize,
    pub replicates: usize,
    pub p1: f64,
    /// Proportion of genes with effect mean `-psi` (three-component designs).
    #[serde(default)]
    pub p2: f64,
    pub psi: f64,
    /// LEMMA effect variance.
    #[serde(default)]
    pub sigma_psi2: f64,
    /// LIMMA effect variance multiplier.
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub tau: f64,
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variance_law: VarianceLaw,
    pub seed: u64,
}

impl SimScenario {
    /// LEMMA generation with low error-variance variability
    /// (`alpha = 5`, `beta = 1/12`, `n1 = n2 = 6`, `sigma_psi2 = 1`).
    pub fn lemma_low(psi: f64, p1: f64) -> Self {
        Self {
            generator: Generator::Lemma,
            genes: 2000,
            replicates: 25,
            p1,
            p2: 0.0,
            psi,
            sigma_psi2: 1.0,
            v0: 0.0,
            tau: 0.0,
            n1: 6,
            n2: 6,
            alpha: 5.0,
            beta: 1.0 / 12.0,
            variance_law: VarianceLaw::InverseGamma,
            seed: 1,
        }
    }

    /// As [`SimScenario::lemma_low`] with high variability (`alpha = 2.1`, `beta = 10/33`).
    pub fn lemma_high(psi: f64, p1: f64) -> Self {
        Self {
            alpha: 2.1,
            beta: 10.0 / 33.0,
            ..Self::lemma_low(psi, p1)
        }
    }

    /// LIMMA generation with zero effect mean, low variability.
    pub fn limma_low(v0: f64, p1: f64) -> Self {
        Self {
            generator: Generator::Limma,
            psi: 0.0,
            sigma_psi2: 0.0,
            v0,
            ..Self::lemma_low(0.0, p1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p1) || !prob(self.p2) || self.p1 + self.p2 > 1.0 {
            return Err(Error::Domain(format!("invalid mixture probabilities {} and {}", self.p1, self.p2)));
        }
        if self.genes == 0 || self.replicates == 0 {
            return Err(Error::InvalidInput("genes and replicates must be positive".into()));
        }
        if self.n1 == 0 || self.n2 == 0 || self.n1 + self.n2 < 3 {
            return Err(Error::InvalidInput("group sizes must be positive with at least 3 samples".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Domain("alpha and beta must be positive".into()));
        }
        if self.variance_law == VarianceLaw::LogNormal && !(self.alpha > 2.0) {
            return Err(Error::Domain("log-normal matching needs alpha > 2 (finite variance)".into()));
        }
        if ![self.psi, self.tau, self.sigma_psi2, self.v0].iter().all(|v| v.is_finite())
            || self.sigma_psi2 < 0.0
            || self.v0 < 0.0
        {
            return Err(Error::Domain("effect parameters must be finite, variances nonnegative".into()));
        }
        Ok(())
    }

    /// Number of genes with effect mean `+psi`.
    pub fn n_positive(&self) -> usize {
        (self.p1 * self.genes as f64).round() as usize
    }

    /// Number of genes with effect mean `-psi`.
    pub fn n_negative(&self) -> usize {
        (self.p2 * self.genes as f64).round() as usize
    }

    pub fn components(&self) -> Components {
        if self.p2 > 0.0 {
            Components::Three
        } else {
            Components::Two
        }
    }

    pub fn true_prior(&self) -> VariancePrior<f64> {
        VariancePrior {
            alpha: self.alpha,
            beta: self.beta,
            method: PriorMethod::MaxLikelihood,
        }
    }

    /// True mixture parameters and the model kind the generator corresponds to.
    pub fn true_params(&self) -> (ModelKind, MixtureParams<f64>) {
        let (kind, spread) = match self.generator {
            Generator::Lemma => (ModelKind::RR, EffectSpread::SigmaPsi2(self.sigma_psi2)),
            Generator::Limma => (ModelKind::RG, EffectSpread::V0(self.v0)),
        };
        (
            kind,
            MixtureParams {
                p1: self.p1,
                p2: self.p2,
                tau: self.tau,
                psi: self.psi,
                spread,
            },
        )
    }
}

/// One simulated data set with its truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub replicate: usize,
    pub matrix: ExpressionMatrix<f64>,
    /// 0 null, 1 effect mean `+psi`, 2 effect mean `-psi`.
    pub labels: Vec<u8>,
    pub error_var: Vec<f64>,
    pub effects: Vec<f64>,
}

impl SimData {
    pub fn is_nonnull(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }
}

/// Random stream for one replicate: seeded by the scenario, one stream per replicate.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Draws one replicate.
///
/// Group 1 responses are `(tau + psi_g)/2 + eps` and group 2 responses
/// `-(tau + psi_g)/2 + eps`, so `d_g` has mean `tau + psi_g`.
pub fn generate(scenario: &SimScenario, replicate: usize) -> Result<SimData> {
    scenario.validate()?;
    let mut rng = replicate_rng(scenario.seed, replicate);
    let g = scenario.genes;

    let error_var: Vec<f64> = match scenario.variance_law {
        VarianceLaw::InverseGamma => {
            let gamma = Gamma::new(scenario.alpha, scenario.beta).map_err(|e| Error::Domain(e.to_string()))?;
            (0..g).map(|_| 1.0 / gamma.sample(&mut rng)).collect()
        }
        VarianceLaw::LogNormal => {
            let mean = 1.0 / ((scenario.alpha - 1.0) * scenario.beta);
            let s2 = (1.0 + 1.0 / (scenario.alpha - 2.0)).ln();
            let ln = LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
            (0..g).map(|_| ln.sample(&mut rng)).collect()
        }
    };

    let (pos, neg) = (scenario.n_positive(), scenario.n_negative());
    if pos + neg > g {
        return Err(Error::Domain("more non-null genes than genes".into()));
    }
    let mut labels = vec![0u8; g];
    labels[..pos].fill(1);
    labels[pos..pos + neg].fill(2);
    labels.shuffle(&mut rng);

    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let effects: Vec<f64> = labels
        .iter()
        .zip(&error_var)
        .map(|(&l, &e)| {
            let mean = match l {
                0 => return 0.0,
                1 => scenario.psi,
                _ => -scenario.psi,
            };
            let var = match scenario.generator {
                Generator::Lemma => scenario.sigma_psi2,
                Generator::Limma => scenario.v0 * e,
            };
            mean + var.sqrt() * std_normal.sample(&mut rng)
        })
        .collect();

    let (n1, n2) = (scenario.n1, scenario.n2);
    let rows: Vec<Vec<f64>> = (0..g)
        .map(|k| {
            let half = (scenario.tau + effects[k]) / 2.0;
            let sd = error_var[k].sqrt();
            (0..n1 + n2)
                .map(|j| {
                    let centre = if j < n1 { half } else { -half };
                    centre + sd * std_normal.sample(&mut rng)
                })
                .collect()
        })
        .collect();
    let groups: Vec<&str> = (0..n1 + n2).map(|j| if j < n1 { "1" } else { "2" }).collect();
    let ids = (0..g).map(|k| format!("gene{}", k + 1)).collect();
    Ok(SimData {
        replicate,
        matrix: ExpressionMatrix::new(ids, &groups, rows)?,
        labels,
        error_var,
        effects,
    })
}

/// Posteriors with the true parameters and true variance prior plugged in.
pub fn optimal_rule(data: &SimData, scenario: &SimScenario) -> Result<Posteriors<f64>> {
    let summaries = summarize(&data.matrix)?;
    let (kind, params) = scenario.true_params();
    e_step(&summaries, &scenario.true_prior(), kind, &params)
}

/// Type-7 sample quantile.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("quantile level must lie in [0, 1], got {p}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Fraction of non-null statistics above the `1 - size` quantile of the null
/// statistics. Larger statistics indicate non-null genes.
pub fn empirical_power(statistics: &[f64], nonnull: &[bool], size: f64) -> Result<f64> {
    if statistics.len() != nonnull.len() {
        return Err(Error::Structure("statistics and truth differ in length".into()));
    }
    if !(size > 0.0 && size < 1.0) {
        return Err(Error::Domain(format!("size must lie in (0, 1), got {size}")));
    }
    let nulls: Vec<f64> = statistics.iter().zip(nonnull).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    if nulls.is_empty() {
        return Err(Error::InvalidInput("no null genes to calibrate the critical value".into()));
    }
    let critical = quantile(&nulls, 1.0 - size)?;
    let alt: Vec<f64> = statistics.iter().zip(nonnull).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
    if alt.is_empty() {
        return Err(Error::InvalidInput("no non-null genes".into()));
    }
    Ok(alt.iter().filter(|&&s| s > critical).count() as f64 / alt.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// `FP / (FP + TP)`, zero when nothing is called.
    pub fdr: f64,
}

/// Accuracy and FDR when genes with posterior null probability below each
/// threshold are called non-null. A threshold of 1 calls every gene.
pub fn accuracy_fdr_curves(local_fdr: &[f64], nonnull: &[bool], thresholds: &[f64]) -> Result<Vec<CurvePoint>> {
    if local_fdr.len() != nonnull.len() {
        return Err(Error::Structure("posteriors and truth differ in length".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1], got {t}")));
    }
    let total = local_fdr.len();
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for (&l, &truth) in local_fdr.iter().zip(nonnull) {
                let called = threshold >= 1.0 || l < threshold;
                match (called, truth) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            CurvePoint {
                threshold,
                tp,
                fp,
                tn,
                fn_,
                accuracy: (tp + tn) as f64 / total as f64,
                fdr: if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 },
            }
        })
        .collect())
}

/// Thresholds `0, 0.05, ..., 0.5`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|k| k as f64 * 0.05).collect()
}

/// A procedure compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Model(ModelKind),
    /// True parameters plugged into the generating model.
    Oracle,
}

impl Method {
    pub fn all() -> Vec<Method> {
        ModelKind::ALL.iter().map(|&k| Method::Model(k)).chain([Method::Oracle]).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Model(k) => write!(f, "{k}"),
            Method::Oracle => f.write_str("OR"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("or") || s.eq_ignore_ascii_case("oracle") {
            Ok(Method::Oracle)
        } else {
            s.parse().map(Method::Model)
        }
    }
}

/// Output of one method on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// Test statistic per gene, larger meaning stronger evidence:
    /// `-ln LR` for mixture fits and the oracle, `|T|` for fixed-effect kinds.
    pub statistic: Vec<f64>,
    /// Posterior null probability; absent for fixed-effect kinds.
    pub local_fdr: Option<Vec<f64>>,
    pub params: Option<MixtureParams<f64>>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub nonnull: Vec<bool>,
    pub prior: Option<VariancePrior<f64>>,
    pub methods: Vec<std::result::Result<MethodOutcome, String>>,
}

fn neg_ln(lr: &[f64]) -> Vec<f64> {
    lr.iter().map(|&v| -v.ln()).collect()
}

fn run_method(
    method: Method,
    summaries: &GeneSummaries<f64>,
    prior: &VariancePrior<f64>,
    scenario: &SimScenario,
) -> Result<MethodOutcome> {
    match method {
        Method::Oracle => {
            let (kind, params) = scenario.true_params();
            let truth = evaluate(summaries, &scenario.true_prior(), kind, &params)?;
            let lr = likelihood_ratio(summaries, &truth)?;
            Ok(MethodOutcome {
                method,
                statistic: neg_ln(&lr.lr),
                local_fdr: Some(truth.posteriors.local_fdr()),
                params: Some(params),
                converged: true,
            })
        }
        Method::Model(kind) if kind.is_random_mean() => {
            let components = if kind.supports_three_components() {
                scenario.components()
            } else {
                Components::Two
            };
            let config = EmConfig {
                components,
                ..EmConfig::default()
            };
            let f = fit(summaries, prior, kind, &config)?;
            let lr = likelihood_ratio(summaries, &f)?;
            Ok(MethodOutcome {
                method,
                statistic: neg_ln(&lr.lr),
                local_fdr: Some(f.posteriors.local_fdr()),
                params: Some(f.params),
                converged: f.converged,
            })
        }
        Method::Model(kind) => {
            let stats = fixed_effect_statistics(summaries, prior, kind)?;
            Ok(MethodOutcome {
                method,
                statistic: stats.t.iter().map(|t| t.abs()).collect(),
                local_fdr: None,
                params: None,
                converged: true,
            })
        }
    }
}

/// Runs every method on one replicate; failures are kept per method.
pub fn run_replicate(scenario: &SimScenario, replicate: usize, methods: &[Method]) -> Result<ReplicateOutcome> {
    let data = generate(scenario, replicate)?;
    let summaries = summarize(&data.matrix)?;
    let prior = fit_variance_prior(&summaries);
    let outcomes = methods
        .iter()
        .map(|&m| match &prior {
            Ok(p) => run_method(m, &summaries, p, scenario).map_err(|e| e.to_string()),
            Err(_) if m == Method::Oracle => {
                run_method(m, &summaries, &scenario.true_prior(), scenario).map_err(|e| e.to_string())
            }
            Err(e) => Err(format!("prior fit failed: {e}")),
        })
        .collect();
    Ok(ReplicateOutcome {
        replicate,
        nonnull: data.is_nonnull(),
        prior: prior.ok(),
        methods: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Empirical power at size 0.05 from statistics pooled over replicates.
    pub power: Option<f64>,
    /// Curve over all replicates: accuracy from pooled counts, FDR averaged
    /// per replicate. Empty for fixed-effect kinds.
    pub curve: Vec<CurvePoint>,
    pub p1_estimates: Vec<f64>,
    pub psi_estimates: Vec<f64>,
    pub failures: Vec<String>,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: SimScenario,
    pub thresholds: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    pub alpha_estimates: Vec<f64>,
    pub beta_estimates: Vec<f64>,
}

impl StudyReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Runs all replicates of a scenario in parallel and aggregates by method.
pub fn run_study(scenario: &SimScenario, methods: &[Method], thresholds: &[f64]) -> Result<StudyReport> {
    scenario.validate()?;
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1], got {t}")));
    }
    let reps: Vec<ReplicateOutcome> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r, methods))
        .collect::<Result<_>>()?;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| summarize_method(method, k, &reps, thresholds))
        .collect::<Result<_>>()?;
    Ok(StudyReport {
        scenario: *scenario,
        thresholds: thresholds.to_vec(),
        methods: summaries,
        alpha_estimates: reps.iter().filter_map(|r| r.prior.map(|p| p.alpha)).collect(),
        beta_estimates: reps.iter().filter_map(|r| r.prior.map(|p| p.beta)).collect(),
    })
}

fn summarize_method(method: Method, k: usize, reps: &[ReplicateOutcome], thresholds: &[f64]) -> Result<MethodSummary> {
    let mut stats = Vec::new();
    let mut truth = Vec::new();
    let mut curves: Vec<Vec<CurvePoint>> = Vec::new();
    let mut out = MethodSummary {
        method,
        power: None,
        curve: Vec::new(),
        p1_estimates: Vec::new(),
        psi_estimates: Vec::new(),
        failures: Vec::new(),
        non_converged: 0,
    };
    for rep in reps {
        match &rep.methods[k] {
            Ok(o) => {
                stats.extend_from_slice(&o.statistic);
                truth.extend_from_slice(&rep.nonnull);
                if let Some(l) = &o.local_fdr {
                    curves.push(accuracy_fdr_curves(l, &rep.nonnull, thresholds)?);
                }
                if let Some(p) = o.params {
                    out.p1_estimates.push(p.p1);
                    out.psi_estimates.push(p.psi);
                }
                if !o.converged {
                    out.non_converged += 1;
                }
            }
            Err(e) => out.failures.push(format!("replicate {}: {e}", rep.replicate)),
        }
    }
    let has_both = truth.iter().any(|&t| t) && truth.iter().any(|&t| !t);
    if has_both {
        out.power = Some(empirical_power(&stats, &truth, 0.05)?);
    }
    if !curves.is_empty() {
        let n = curves.len() as f64;
        out.curve = (0..thresholds.len())
            .map(|i| {
                let sum = |f: fn(&CurvePoint) -> usize| curves.iter().map(|c| f(&c[i])).sum::<usize>();
                let (tp, fp, tn, fn_) = (sum(|p| p.tp), sum(|p| p.fp), sum(|p| p.tn), sum(|p| p.fn_));
                // Accuracy from pooled counts; FDR averaged over replicates.
                CurvePoint {
                    threshold: thresholds[i],
                    tp,
                    fp,
                    tn,
                    fn_,
                    accuracy: (tp + tn) as f64 / (tp + fp + tn + fn_) as f64,
                    fdr: curves.iter().map(|c| c[i].fdr).sum::<f64>() / n,
                }
            })
            .collect();
    }
    Ok(out)
}
