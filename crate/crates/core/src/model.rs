//! Domain types, per-gene sufficient statistics and the component densities.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Raw responses, one row per gene and one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix<T> {
    gene_ids: Vec<String>,
    group_labels: Vec<String>,
    group_of_sample: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> ExpressionMatrix<T> {
    /// Builds a matrix from per-gene rows and per-sample group labels.
    ///
    /// Groups are numbered in order of first appearance, so the first label
    /// seen becomes treatment group 1.
    pub fn new<S: AsRef<str>>(
        gene_ids: Vec<String>,
        sample_groups: &[S],
        rows: Vec<Vec<T>>,
    ) -> Result<Self> {
        if gene_ids.is_empty() {
            return Err(Error::InvalidInput("matrix has no genes".into()));
        }
        if sample_groups.is_empty() {
            return Err(Error::InvalidInput("matrix has no samples".into()));
        }
        if gene_ids.len() != rows.len() {
            return Err(Error::Structure(format!(
                "{} gene ids for {} rows",
                gene_ids.len(),
                rows.len()
            )));
        }
        let mut group_labels: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let group_of_sample = sample_groups
            .iter()
            .map(|label| {
                let label = label.as_ref();
                *index.entry(label).or_insert_with(|| {
                    group_labels.push(label.to_string());
                    group_labels.len() - 1
                })
            })
            .collect::<Vec<_>>();

        let n = sample_groups.len();
        let mut values = Vec::with_capacity(n * rows.len());
        for (g, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structure(format!(
                    "gene {} has {} values, expected {n}",
                    gene_ids[g],
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "gene {} sample {} is not finite",
                    gene_ids[g],
                    j + 1
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            gene_ids,
            group_labels,
            group_of_sample,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.group_of_sample.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    /// Zero-based group index of each sample.
    pub fn group_of_sample(&self) -> &[usize] {
        &self.group_of_sample
    }

    pub fn row(&self, gene: usize) -> &[T] {
        let n = self.n_samples();
        &self.values[gene * n..(gene + 1) * n]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &k in &self.group_of_sample {
            sizes[k] += 1;
        }
        sizes
    }

    /// Per-group means and the pooled within-group sum of squares of one gene.
    pub(crate) fn group_means_and_sse(&self, gene: usize) -> (Vec<T>, T) {
        let t = self.n_groups();
        let row = self.row(gene);
        let mut sums = vec![T::zero(); t];
        let mut counts = vec![0usize; t];
        for (&y, &k) in row.iter().zip(&self.group_of_sample) {
            sums[k] = sums[k] + y;
            counts[k] += 1;
        }
        let means: Vec<T> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| s / T::from_count(c))
            .collect();
        let sse = row
            .iter()
            .zip(&self.group_of_sample)
            .map(|(&y, &k)| (y - means[k]) * (y - means[k]))
            .sum();
        (means, sse)
    }
}

/// Per-gene sufficient statistics `(d, s, m, f)` and group sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSummaries<T> {
    gene_ids: Vec<String>,
    d: Vec<T>,
    s: Vec<T>,
    m: Vec<T>,
    f: Vec<u32>,
    n1: Vec<u32>,
    n2: Vec<u32>,
    paired: bool,
}

impl<T: Real> GeneSummaries<T> {
    /// Assembles summaries from precomputed parts, checking the invariants.
    ///
    /// For paired summaries `n2` must be all zeros and `n1` holds the number
    /// of differences.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        gene_ids: Vec<String>,
        d: Vec<T>,
        s: Vec<T>,
        m: Vec<T>,
        f: Vec<u32>,
        n1: Vec<u32>,
        n2: Vec<u32>,
        paired: bool,
    ) -> Result<Self> {
        let g = d.len();
        if [gene_ids.len(), s.len(), m.len(), f.len(), n1.len(), n2.len()]
            .iter()
            .any(|&l| l != g)
        {
            return Err(Error::Structure("summary fields differ in length".into()));
        }
        if g == 0 {
            return Err(Error::InvalidInput("no genes".into()));
        }
        let starved: Vec<String> = f
            .iter()
            .zip(&gene_ids)
            .filter(|(&f, _)| f == 0)
            .map(|(_, id)| id.clone())
            .collect();
        if !starved.is_empty() {
            return Err(Error::InsufficientReplicates { genes: starved });
        }
        for i in 0..g {
            if !(m[i] >= T::zero()) || !m[i].is_finite() || !d[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "gene {} has d = {}, m = {}",
                    gene_ids[i], d[i], m[i]
                )));
            }
            let ok = if paired {
                n1[i] >= 1 && n2[i] == 0
            } else {
                n1[i] >= 1 && n2[i] >= 1
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "gene {} has group sizes ({}, {})",
                    gene_ids[i], n1[i], n2[i]
                )));
            }
        }
        Ok(Self {
            gene_ids,
            d,
            s,
            m,
            f,
            n1,
            n2,
            paired,
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

    /// Differences of group means.
    pub fn d(&self) -> &[T] {
        &self.d
    }

    /// Sums of group means. Not used by any estimator.
    pub fn s(&self) -> &[T] {
        &self.s
    }

    /// Pooled within-group mean squared errors.
    pub fn m(&self) -> &[T] {
        &self.m
    }

    pub fn f(&self) -> &[u32] {
        &self.f
    }

    pub fn n1(&self) -> &[u32] {
        &self.n1
    }

    pub fn n2(&self) -> &[u32] {
        &self.n2
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    /// Multiplier turning an error variance into the variance of `d_g`:
    /// `1/n1 + 1/n2`, or `1/n` for paired differences.
    pub fn var_factor(&self, gene: usize) -> T {
        let inv = |n: u32| T::one() / T::from_u32(n).expect("u32 representable");
        if self.paired {
            inv(self.n1[gene])
        } else {
            inv(self.n1[gene]) + inv(self.n2[gene])
        }
    }

    /// Copy with genes permuted so that output gene `i` is input gene `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &Vec<T>| order.iter().map(|&i| v[i]).collect();
        let pick_u = |v: &Vec<u32>| order.iter().map(|&i| v[i]).collect();
        Self {
            gene_ids: order.iter().map(|&i| self.gene_ids[i].clone()).collect(),
            d: pick(&self.d),
            s: pick(&self.s),
            m: pick(&self.m),
            f: pick_u(&self.f),
            n1: pick_u(&self.n1),
            n2: pick_u(&self.n2),
            paired: self.paired,
        }
    }
}

/// Reduces a two-group matrix to `(d, s, m, f)` per gene.
///
/// Group 1 is the first group label in sample order, so `d = mean1 - mean2`.
pub fn summarize<T: Real>(data: &ExpressionMatrix<T>) -> Result<GeneSummaries<T>> {
    if data.n_groups() != 2 {
        return Err(Error::Structure(format!(
            "two-group summaries need exactly 2 groups, found {}",
            data.n_groups()
        )));
    }
    let sizes = data.group_sizes();
    let (n1, n2) = (sizes[0] as u32, sizes[1] as u32);
    if n1 + n2 < 3 {
        return Err(Error::InsufficientReplicates {
            genes: data.gene_ids().to_vec(),
        });
    }
    let f = n1 + n2 - 2;
    let g = data.n_genes();
    let mut d = Vec::with_capacity(g);
    let mut s = Vec::with_capacity(g);
    let mut m = Vec::with_capacity(g);
    for gene in 0..g {
        let (means, sse) = data.group_means_and_sse(gene);
        d.push(means[0] - means[1]);
        s.push(means[0] + means[1]);
        m.push(sse / T::from_u32(f).expect("u32 representable"));
    }
    GeneSummaries::from_parts(
        data.gene_ids().to_vec(),
        d,
        s,
        m,
        vec![f; g],
        vec![n1; g],
        vec![n2; g],
        false,
    )
}

/// Summaries for within-subject (paired) designs.
///
/// A single-group matrix is read as per-subject differences. A two-group
/// matrix with equal group sizes is paired column by column in sample order
/// and differenced first.
pub fn paired_summarize<T: Real>(data: &ExpressionMatrix<T>) -> Result<GeneSummaries<T>> {
    let groups = data.group_of_sample();
    let diffs_of = |gene: usize| -> Vec<T> {
        let row = data.row(gene);
        match data.n_groups() {
            1 => row.to_vec(),
            _ => {
                let a = row.iter().zip(groups).filter(|(_, &k)| k == 0).map(|(&y, _)| y);
                let b = row.iter().zip(groups).filter(|(_, &k)| k == 1).map(|(&y, _)| y);
                a.zip(b).map(|(x, y)| x - y).collect()
            }
        }
    };
    match data.n_groups() {
        1 => {}
        2 => {
            let sizes = data.group_sizes();
            if sizes[0] != sizes[1] {
                return Err(Error::Structure(format!(
                    "paired design needs equal group sizes, found {} and {}",
                    sizes[0], sizes[1]
                )));
            }
        }
        t => {
            return Err(Error::Structure(format!(
                "paired design needs 1 group of differences or 2 paired groups, found {t}"
            )))
        }
    }
    let n = diffs_of(0).len();
    if n < 2 {
        return Err(Error::InsufficientReplicates {
            genes: data.gene_ids().to_vec(),
        });
    }
    let g = data.n_genes();
    let nt = T::from_count(n);
    let mut d = Vec::with_capacity(g);
    let mut m = Vec::with_capacity(g);
    for gene in 0..g {
        let x = diffs_of(gene);
        let mean = x.iter().copied().sum::<T>() / nt;
        let ss: T = x.iter().map(|&v| (v - mean) * (v - mean)).sum();
        d.push(mean);
        m.push(ss / (nt - T::one()));
    }
    GeneSummaries::from_parts(
        data.gene_ids().to_vec(),
        d,
        vec![T::zero(); g],
        m,
        vec![n as u32 - 1; g],
        vec![n as u32; g],
        vec![0; g],
        true,
    )
}

/// Log density of `N(mean, var)` at `x`, without argument checks.
#[inline]
pub fn ln_normal_pdf<T: Real>(x: T, mean: T, var: T) -> T {
    let z = x - mean;
    -T::lit(0.5) * ((T::lit(2.0) * T::PI() * var).ln() + z * z / var)
}

fn check_var<T: Real>(var: T) -> Result<()> {
    if var > T::zero() && var.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("variance must be positive, got {var}")))
    }
}

/// Density of the null component `N(tau, var)` at `d`.
pub fn null_density<T: Real>(d: T, tau: T, var: T) -> Result<T> {
    check_var(var)?;
    Ok(ln_normal_pdf(d, tau, var).exp())
}

/// Density of the non-null component `N(tau + psi, var_total)` at `d`.
pub fn nonnull_density<T: Real>(d: T, tau: T, psi: T, var_total: T) -> Result<T> {
    check_var(var_total)?;
    Ok(ln_normal_pdf(d, tau + psi, var_total).exp())
}

/// Fixed/random treatment of the gene effects crossed with the error-variance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Random effects, random (inverse-gamma) variances.
    RR,
    /// Random effects with variance proportional to the gene's error variance.
    RG,
    /// Random effects, per-gene fixed variances.
    RF,
    /// Random effects, one homogeneous variance.
    RH,
    /// Fixed effects, random variances.
    FR,
    /// Fixed effects, per-gene fixed variances.
    FF,
    /// Fixed effects, homogeneous variance.
    FH,
}

/// How the per-gene error variance is estimated for a model kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorVarianceModel {
    /// Posterior mode under the inverse-gamma prior.
    PosteriorMode,
    /// The gene's own mean squared error.
    PerGene,
    /// One pooled estimate shared by all genes.
    Pooled,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::RR,
        ModelKind::RG,
        ModelKind::RF,
        ModelKind::RH,
        ModelKind::FR,
        ModelKind::FF,
        ModelKind::FH,
    ];

    /// Whether gene-specific effects are random, which is what makes the
    /// mixing proportion identifiable.
    pub fn is_random_mean(self) -> bool {
        matches!(self, Self::RR | Self::RG | Self::RF | Self::RH)
    }

    pub fn error_variance(self) -> ErrorVarianceModel {
        match self {
            Self::RR | Self::RG | Self::FR => ErrorVarianceModel::PosteriorMode,
            Self::RF | Self::FF => ErrorVarianceModel::PerGene,
            Self::RH | Self::FH => ErrorVarianceModel::Pooled,
        }
    }

    /// Whether the non-null spread is `v0` times the error variance.
    pub fn is_proportional(self) -> bool {
        self == Self::RG
    }

    pub fn supports_three_components(self) -> bool {
        matches!(self, Self::RR | Self::RG)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::RR => "RR",
            Self::RG => "RG",
            Self::RF => "RF",
            Self::RH => "RH",
            Self::FR => "FR",
            Self::FF => "FF",
            Self::FH => "FH",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RR" => Ok(Self::RR),
            "RG" => Ok(Self::RG),
            "RF" => Ok(Self::RF),
            "RH" => Ok(Self::RH),
            "FR" => Ok(Self::FR),
            "FF" => Ok(Self::FF),
            "FH" => Ok(Self::FH),
            other => Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Number of mixture components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Components {
    /// Null plus one non-null component.
    Two,
    /// Null plus over- and under-expressed components with means `tau ± psi`.
    Three,
}

impl Components {
    pub fn count(self) -> usize {
        match self {
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            _ => Err(Error::InvalidInput(format!("component count must be 2 or 3, got {n}"))),
        }
    }
}

/// Spread of the non-null effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSpread<T> {
    /// `psi_g ~ N(psi, sigma_psi2)`, independent of the error variance.
    SigmaPsi2(T),
    /// `psi_g ~ N(psi, v0 * sigma_eps_g^2)`.
    V0(T),
}

impl<T: Real> EffectSpread<T> {
    pub fn value(self) -> T {
        match self {
            Self::SigmaPsi2(v) | Self::V0(v) => v,
        }
    }

    pub fn with_value(self, v: T) -> Self {
        match self {
            Self::SigmaPsi2(_) => Self::SigmaPsi2(v),
            Self::V0(_) => Self::V0(v),
        }
    }
}

/// Mixture parameters estimated by EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams<T> {
    pub p1: T,
    /// Second non-null proportion; zero for two-component fits.
    pub p2: T,
    pub tau: T,
    pub psi: T,
    pub spread: EffectSpread<T>,
}

impl<T: Real> MixtureParams<T> {
    pub fn two_group(p1: T, tau: T, psi: T, spread: EffectSpread<T>) -> Self {
        Self {
            p1,
            p2: T::zero(),
            tau,
            psi,
            spread,
        }
    }

    pub fn p0(&self) -> T {
        T::one() - self.p1 - self.p2
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.p1, self.p2, self.tau, self.psi, self.spread.value()]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite parameters {self:?}")));
        }
        if self.p1 < T::zero() || self.p2 < T::zero() || self.p1 + self.p2 > T::one() {
            return Err(Error::Domain(format!(
                "mixing proportions p1 = {}, p2 = {} are not a sub-probability",
                self.p1, self.p2
            )));
        }
        if self.spread.value() < T::zero() {
            return Err(Error::Domain(format!(
                "non-null spread must be nonnegative, got {}",
                self.spread.value()
            )));
        }
        Ok(())
    }

    /// Checks that the spread variant matches the model kind.
    pub fn check_kind(&self, kind: ModelKind) -> Result<()> {
        match (kind.is_proportional(), self.spread) {
            (true, EffectSpread::V0(_)) | (false, EffectSpread::SigmaPsi2(_)) => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "{kind} expects {} spread",
                if kind.is_proportional() { "v0" } else { "sigma_psi2" }
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_group(rows: Vec<Vec<f64>>, groups: &[&str]) -> ExpressionMatrix<f64> {
        let ids = (0..rows.len()).map(|i| format!("g{i}")).collect();
        ExpressionMatrix::new(ids, groups, rows).unwrap()
    }

    #[test]
    fn zero_within_group_variance() {
        let x = two_group(vec![vec![1.0, 1.0, 0.0, 0.0]], &["a", "a", "b", "b"]);
        let s = summarize(&x).unwrap();
        assert_eq!((s.d()[0], s.s()[0], s.m()[0], s.f()[0]), (1.0, 1.0, 0.0, 2));
    }

    #[test]
    fn hand_computed_pooled_mse() {
        let x = two_group(vec![vec![2.0, 0.0, 1.0, -1.0]], &["a", "a", "b", "b"]);
        let s = summarize(&x).unwrap();
        assert_eq!((s.d()[0], s.s()[0], s.m()[0], s.f()[0]), (1.0, 1.0, 2.0, 2));
    }

    #[test]
    fn groups_need_not_be_contiguous() {
        let a = two_group(vec![vec![2.0, 0.0, 1.0, -1.0]], &["a", "a", "b", "b"]);
        let b = two_group(vec![vec![2.0, 1.0, 0.0, -1.0]], &["a", "b", "a", "b"]);
        assert_eq!(summarize(&a).unwrap(), summarize(&b).unwrap());
    }

    #[test]
    fn single_replicates_are_rejected_with_gene_listing() {
        let x = two_group(vec![vec![1.0, 0.0], vec![2.0, 1.0]], &["a", "b"]);
        match summarize(&x) {
            Err(Error::InsufficientReplicates { genes }) => assert_eq!(genes, vec!["g0", "g1"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_group_count_is_structural() {
        let x = two_group(vec![vec![1.0, 0.0, 2.0]], &["a", "b", "c"]);
        assert!(matches!(summarize(&x), Err(Error::Structure(_))));
    }

    #[test]
    fn non_finite_values_rejected() {
        let r = ExpressionMatrix::new(vec!["g".into()], &["a", "b"], vec![vec![1.0, f64::NAN]]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn paired_examples() {
        let x = two_group(vec![vec![1.0, 1.0, 1.0], vec![0.0, 2.0, 1.0]], &["d", "d", "d"]);
        let s = paired_summarize(&x).unwrap();
        assert_eq!((s.d()[0], s.m()[0], s.f()[0]), (1.0, 0.0, 2));
        assert_eq!(s.var_factor(0), 1.0 / 3.0);

        let y = two_group(vec![vec![0.0, 2.0]], &["d", "d"]);
        let s = paired_summarize(&y).unwrap();
        assert_eq!((s.d()[0], s.m()[0], s.f()[0]), (1.0, 2.0, 1));

        let z = two_group(vec![vec![-3.5; 5]], &["d"; 5]);
        assert_eq!(paired_summarize(&z).unwrap().m()[0], 0.0);
    }

    #[test]
    fn paired_two_group_input_is_differenced() {
        let x = two_group(vec![vec![3.0, 5.0, 2.0, 3.0]], &["a", "a", "b", "b"]);
        let s = paired_summarize(&x).unwrap();
        assert_eq!((s.d()[0], s.m()[0], s.f()[0]), (1.5, 0.5, 1));
    }

    #[test]
    fn paired_needs_two_differences() {
        let x = two_group(vec![vec![1.0]], &["d"]);
        assert!(matches!(paired_summarize(&x), Err(Error::InsufficientReplicates { .. })));
    }

    #[test]
    fn densities_at_their_modes() {
        let v = null_density(0.0_f64, 0.0, 1.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        let w = nonnull_density(3.5_f64, 1.0, 2.5, 0.7).unwrap();
        assert!((w - (2.0 * std::f64::consts::PI * 0.7).powf(-0.5)).abs() < 1e-15);
        assert!(null_density(0.0_f64, 0.0, 0.0).is_err());
        assert!(nonnull_density(0.0_f64, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // composite Simpson on [-12, 12] standard deviations
        let (tau, var) = (0.3_f64, 2.0_f64);
        let sd = var.sqrt();
        let n = 20_000;
        let (a, b) = (tau - 12.0 * sd, tau + 12.0 * sd);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * null_density(a + i as f64 * h, tau, var).unwrap();
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn model_kind_round_trips_through_strings() {
        for k in ModelKind::ALL {
            assert_eq!(k.to_string().to_lowercase().parse::<ModelKind>().unwrap(), k);
        }
        assert!("xx".parse::<ModelKind>().is_err());
    }

    #[test]
    fn params_validation() {
        let ok = MixtureParams::two_group(0.1, 0.0, 1.0, EffectSpread::SigmaPsi2(1.0));
        assert!(ok.validate().is_ok());
        let bad = MixtureParams { p2: 0.95, ..ok };
        assert!(bad.validate().is_err());
        assert!(ok.check_kind(ModelKind::RG).is_err());
        assert!(ok.check_kind(ModelKind::RR).is_ok());
    }
}
