//! The four subcommands.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ebmix_core::multi::MultiIteration;
use ebmix_core::prior::{fit_prior_ml, fit_prior_moments};
use ebmix_core::simulation::{run_study, Method, SimScenario};
use ebmix_core::{
    bh_procedure, decide, fit, fit_multi, fit_variance_prior, fit_variance_prior_moments, lrt_multi, paired_summarize,
    summarize, summarize_multi, Components, ContrastMatrix, DecisionConfig, EffectSpread, EmConfig, EmIteration,
    ExpressionMatrix, Init, ModelKind, MultiConfig, PriorMethod, VariancePrior,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{ContrastSpec, FitPlan, GroupSpec, SimPlan};
use crate::error::{CliError, Result};
use crate::io::{ingest, open, read_group_map, sig, GroupSource};

pub const SCHEMA_VERSION: u32 = 1;

pub const GENES_COLUMNS: [&str; 15] = [
    "gene",
    "d",
    "m",
    "sigma2",
    "d_var",
    "p1",
    "p2",
    "local_fdr",
    "lambda",
    "t_post",
    "lr",
    "p_value",
    "bh_adjusted",
    "call_local",
    "call_fdr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    TwoGroup,
    MultiGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportParams {
    Scalar {
        p1: f64,
        p2: f64,
        tau: f64,
        psi: f64,
        spread: EffectSpread<f64>,
    },
    Multi {
        p1: f64,
        h_tau: Vec<f64>,
        h_psi: Vec<f64>,
        sigma_psi2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOut {
    pub local_fdr: f64,
    pub fdr: f64,
    pub min_effect: f64,
}

impl From<&DecisionConfig<f64>> for DecisionOut {
    fn from(c: &DecisionConfig<f64>) -> Self {
        Self {
            local_fdr: c.local_fdr_threshold,
            fdr: c.fdr_level,
            min_effect: c.min_abs_effect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub local: usize,
    /// Split by non-null component; three-component fits only.
    pub local_up: Option<usize>,
    pub local_down: Option<usize>,
    /// Absent for multi-group fits, which have no p-values.
    pub fdr: Option<usize>,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub schema_version: u32,
    pub design: Design,
    pub model: ModelKind,
    pub components: usize,
    pub paired: bool,
    pub groups: Vec<String>,
    pub genes: usize,
    pub params: ReportParams,
    pub prior: VariancePrior<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: Vec<f64>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    pub decision: DecisionOut,
    pub calls: CallCounts,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Table {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let w = csv::Writer::from_writer(create(&path)?);
        let mut t = Table { path, w };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        let cells: Vec<String> = cells.into_iter().collect();
        self.w
            .write_record(&cells)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn bool_cell(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_contrast(path: &Path) -> Result<ContrastMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{} line {}: bad number {s:?}", path.display(), k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(ContrastMatrix::custom(rows)?)
}

fn load_matrix(plan: &FitPlan) -> Result<(ExpressionMatrix<f64>, Vec<String>)> {
    let source = match &plan.groups {
        GroupSpec::Labels(l) => GroupSource::Labels(l.clone()),
        GroupSpec::File(p) => GroupSource::Map(read_group_map(open(p)?)?),
        GroupSpec::Header => GroupSource::Header,
    };
    let ing = ingest(open(&plan.input)?, plan.format, &source)?;
    for w in &ing.warnings {
        warn!("{w}");
    }
    Ok((ing.matrix, ing.warnings))
}

/// Fits the model and writes `fit.json` and `genes.csv`; on non-convergence
/// also `trace.json`, then fails with exit code 3.
pub fn cmd_fit(plan: &FitPlan) -> Result<()> {
    let (matrix, warnings) = load_matrix(plan)?;
    ensure_dir(&plan.output)?;
    let multi = plan.contrast.is_some() || matrix.n_groups() > 2;
    if multi {
        fit_multi_group(plan, &matrix, warnings)
    } else {
        fit_two_group(plan, &matrix, warnings)
    }
}

fn fit_two_group(plan: &FitPlan, matrix: &ExpressionMatrix<f64>, warnings: Vec<String>) -> Result<()> {
    if matrix.n_groups() != 2 {
        return Err(CliError::Data(format!("need two groups, found {}", matrix.n_groups())));
    }
    let summaries = if plan.paired { paired_summarize(matrix)? } else { summarize(matrix)? };
    let prior = match plan.prior_method {
        PriorMethod::MaxLikelihood => fit_variance_prior(&summaries)?,
        PriorMethod::Moments => fit_variance_prior_moments(&summaries)?,
    };
    info!("prior alpha = {}, beta = {}", prior.alpha, prior.beta);
    let components = plan.components.unwrap_or(if plan.model.supports_three_components() {
        Components::Three
    } else {
        Components::Two
    });
    let config = EmConfig {
        max_iters: plan.em.max_iters,
        tol: plan.em.tol,
        posterior_tol: plan.em.posterior_tol,
        init: Init::Auto,
        components,
    };
    let result = fit(&summaries, &prior, plan.model, &config)?;
    let inf = decide(&summaries, &result, &plan.decision)?;

    let mut table = Table::create(plan.output.join("genes.csv"), &GENES_COLUMNS)?;
    for g in 0..summaries.len() {
        table.row([
            summaries.gene_ids()[g].clone(),
            sig(summaries.d()[g]),
            sig(summaries.m()[g]),
            sig(result.error_var[g]),
            sig(result.d_var[g]),
            sig(result.posteriors.nonnull[g]),
            sig(result.posteriors.second[g]),
            sig(inf.local_fdr[g]),
            sig(inf.lambda[g]),
            sig(inf.t_post[g]),
            sig(inf.lr[g]),
            sig(inf.p_value[g]),
            sig(inf.bh_adjusted[g]),
            bool_cell(inf.call_local[g]),
            bool_cell(inf.call_fdr[g]),
        ])?;
    }
    table.finish()?;

    let three = components == Components::Three;
    let up = (0..summaries.len())
        .filter(|&g| inf.call_local[g] && result.posteriors.nonnull[g] >= result.posteriors.second[g])
        .count();
    let local = inf.call_local.iter().filter(|&&c| c).count();
    let p = result.params;
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        design: Design::TwoGroup,
        model: plan.model,
        components: components.count(),
        paired: plan.paired,
        groups: matrix.group_labels().to_vec(),
        genes: summaries.len(),
        params: ReportParams::Scalar {
            p1: p.p1,
            p2: p.p2,
            tau: p.tau,
            psi: p.psi,
            spread: p.spread,
        },
        prior,
        converged: result.converged,
        iterations: result.iterations(),
        loglik: result.trace.logliks(),
        notes: result.trace.notes.clone(),
        warnings,
        decision: DecisionOut::from(&plan.decision),
        calls: CallCounts {
            local,
            local_up: three.then_some(up),
            local_down: three.then_some(local - up),
            fdr: Some(inf.call_fdr.iter().filter(|&&c| c).count()),
        },
    };
    write_json(&plan.output.join("fit.json"), &report)?;
    if !result.converged {
        return Err(non_converged(&plan.output, result.trace.iterations.as_slice(), result.iterations()));
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum TraceDump<'a> {
    Scalar(&'a [EmIteration<f64>]),
    Multi(&'a [MultiIteration<f64>]),
}

trait IntoDump {
    fn dump(&self) -> TraceDump<'_>;
}

impl IntoDump for [EmIteration<f64>] {
    fn dump(&self) -> TraceDump<'_> {
        TraceDump::Scalar(self)
    }
}

impl IntoDump for [MultiIteration<f64>] {
    fn dump(&self) -> TraceDump<'_> {
        TraceDump::Multi(self)
    }
}

fn non_converged<D: IntoDump + ?Sized>(dir: &Path, trace: &D, iterations: usize) -> CliError {
    let path = dir.join("trace.json");
    match write_json(&path, &trace.dump()) {
        Ok(()) => CliError::Numerical(format!(
            "EM did not converge in {iterations} iterations; trace written to {}",
            path.display()
        )),
        Err(e) => e,
    }
}

fn fit_multi_group(plan: &FitPlan, matrix: &ExpressionMatrix<f64>, warnings: Vec<String>) -> Result<()> {
    if plan.paired {
        return Err(CliError::Usage("paired designs need exactly two groups and no contrast".into()));
    }
    if plan.model != ModelKind::RR {
        return Err(CliError::Usage(format!(
            "multi-group fits use the rr model, got {}",
            plan.model
        )));
    }
    if plan.components == Some(Components::Three) {
        return Err(CliError::Usage("multi-group fits have two components".into()));
    }
    let contrast = match &plan.contrast {
        Some(ContrastSpec::File(p)) => read_contrast(p)?,
        Some(ContrastSpec::Helmert) | None => ContrastMatrix::helmert(matrix.n_groups())?,
    };
    let vs = summarize_multi(matrix, &contrast)?;
    let prior = match plan.prior_method {
        PriorMethod::MaxLikelihood => fit_prior_ml(vs.m(), vs.f())?,
        PriorMethod::Moments => fit_prior_moments(vs.m(), vs.f())?,
    };
    let config = MultiConfig {
        max_iters: plan.em.max_iters,
        tol: plan.em.tol,
        posterior_tol: plan.em.posterior_tol,
    };
    let result = fit_multi(&vs, &prior, None, &config)?;
    let lr = lrt_multi(&vs, &result)?;
    let p = &result.params;
    let k = contrast.dim();

    let mut header: Vec<String> = ["gene", "m", "sigma2", "p1", "local_fdr", "lr", "call_local"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("d_{j}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::create(plan.output.join("genes.csv"), &header_refs)?;
    let mut local = 0;
    for g in 0..vs.len() {
        let effect: f64 = vs.d()[g].iter().zip(&p.h_tau).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let lfdr = 1.0 - result.posterior_nonnull[g];
        let call = effect >= plan.decision.min_abs_effect && lfdr < plan.decision.local_fdr_threshold;
        local += usize::from(call);
        let mut row = vec![
            vs.gene_ids()[g].clone(),
            sig(vs.m()[g]),
            sig(result.error_var[g]),
            sig(result.posterior_nonnull[g]),
            sig(lfdr),
            sig(lr.lr[g]),
            bool_cell(call),
        ];
        row.extend(vs.d()[g].iter().map(|&v| sig(v)));
        table.row(row)?;
    }
    table.finish()?;

    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        design: Design::MultiGroup,
        model: ModelKind::RR,
        components: 2,
        paired: false,
        groups: matrix.group_labels().to_vec(),
        genes: vs.len(),
        params: ReportParams::Multi {
            p1: p.p1,
            h_tau: p.h_tau.clone(),
            h_psi: p.h_psi.clone(),
            sigma_psi2: p.sigma_psi2,
        },
        prior,
        converged: result.converged,
        iterations: result.iterations(),
        loglik: result.trace.iter().map(|t| t.loglik).collect(),
        notes: result.notes.clone(),
        warnings,
        decision: DecisionOut::from(&plan.decision),
        calls: CallCounts {
            local,
            local_up: None,
            local_down: None,
            fdr: None,
        },
    };
    write_json(&plan.output.join("fit.json"), &report)?;
    if !result.converged {
        return Err(non_converged(&plan.output, result.trace.as_slice(), result.iterations()));
    }
    Ok(())
}

/// A CSV file held as named columns.
struct Frame {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Frame {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(open(path)?);
        let bad = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        let header = rdr.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(bad))
            .collect::<Result<_>>()?;
        Ok(Frame { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column {name:?} missing")))
    }

    fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.col(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse()
                    .map_err(|_| CliError::Data(format!("row {}, column {name:?}: bad number {:?}", i + 2, r[j])))
            })
            .collect()
    }

    fn write(&self, path: PathBuf) -> Result<()> {
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        let mut t = Table::create(path, &header)?;
        for r in &self.rows {
            t.row(r.iter().cloned())?;
        }
        t.finish()
    }
}

/// Re-applies decision thresholds to an existing fit directory.
pub fn cmd_classify(fit_dir: &Path, out_dir: &Path, decision: &DecisionConfig<f64>) -> Result<()> {
    decision.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report: FitReport = read_json(&fit_dir.join("fit.json"))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(CliError::Data(format!("unsupported fit schema version {}", report.schema_version)));
    }
    let mut genes = Frame::read(&fit_dir.join("genes.csv"))?;
    if genes.rows.len() != report.genes {
        return Err(CliError::Data(format!(
            "genes.csv has {} rows, fit.json reports {}",
            genes.rows.len(),
            report.genes
        )));
    }
    let lfdr = genes.numbers("local_fdr")?;
    let effect: Vec<f64> = match &report.params {
        ReportParams::Scalar { tau, .. } => genes.numbers("d")?.iter().map(|d| (d - tau).abs()).collect(),
        ReportParams::Multi { h_tau, .. } => {
            let cols = (1..=h_tau.len())
                .map(|j| genes.numbers(&format!("d_{j}")))
                .collect::<Result<Vec<_>>>()?;
            (0..genes.rows.len())
                .map(|g| cols.iter().zip(h_tau).map(|(c, t)| (c[g] - t).powi(2)).sum::<f64>().sqrt())
                .collect()
        }
    };
    let ok: Vec<bool> = effect.iter().map(|&e| e >= decision.min_abs_effect).collect();
    let call_local: Vec<bool> = lfdr
        .iter()
        .zip(&ok)
        .map(|(&l, &o)| o && l < decision.local_fdr_threshold)
        .collect();
    let jl = genes.col("call_local")?;
    for (row, &c) in genes.rows.iter_mut().zip(&call_local) {
        row[jl] = bool_cell(c);
    }
    let local = call_local.iter().filter(|&&c| c).count();
    report.calls.local = local;
    if report.design == Design::TwoGroup {
        let pv = genes.numbers("p_value")?;
        let bh = bh_procedure(&pv, decision.fdr_level)?;
        let jf = genes.col("call_fdr")?;
        let mut fdr = 0;
        for ((row, &c), &o) in genes.rows.iter_mut().zip(&bh.calls).zip(&ok) {
            row[jf] = bool_cell(c && o);
            fdr += usize::from(c && o);
        }
        report.calls.fdr = Some(fdr);
        if report.components == 3 {
            let (p1, p2) = (genes.numbers("p1")?, genes.numbers("p2")?);
            let up = (0..p1.len()).filter(|&g| call_local[g] && p1[g] >= p2[g]).count();
            report.calls.local_up = Some(up);
            report.calls.local_down = Some(local - up);
        }
    }
    report.decision = DecisionOut::from(decision);
    ensure_dir(out_dir)?;
    genes.write(out_dir.join("genes.csv"))?;
    write_json(&out_dir.join("fit.json"), &report)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Fitted mixture density on a grid of `d` and a histogram of the observed
/// `d`, from a two-group fit directory.
pub fn report_fit(fit_dir: &Path, out_dir: &Path, grid_points: usize, bins: usize) -> Result<()> {
    if grid_points < 2 || bins == 0 {
        return Err(CliError::Usage("need at least 2 grid points and 1 bin".into()));
    }
    let report: FitReport = read_json(&fit_dir.join("fit.json"))?;
    let ReportParams::Scalar { p1, p2, tau, psi, spread } = report.params else {
        return Err(CliError::Usage("density reports need a two-group fit".into()));
    };
    let genes = Frame::read(&fit_dir.join("genes.csv"))?;
    let d = genes.numbers("d")?;
    let e = genes.numbers("sigma2")?;
    let s = genes.numbers("d_var")?;
    let v: Vec<f64> = match spread {
        EffectSpread::SigmaPsi2(x) => s.iter().map(|&sg| x + sg).collect(),
        EffectSpread::V0(x) => s.iter().zip(&e).map(|(&sg, &eg)| x * eg + sg).collect(),
    };
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let n = d.len() as f64;
    let p0 = 1.0 - p1 - p2;

    ensure_dir(out_dir)?;
    let mut t = Table::create(out_dir.join("density.csv"), &["d", "null", "nonnull_up", "nonnull_down", "mixture"])?;
    for i in 0..grid_points {
        let x = lo + (hi - lo) * i as f64 / (grid_points - 1) as f64;
        let f0 = p0 * s.iter().map(|&sg| normal_pdf(x, tau, sg)).sum::<f64>() / n;
        let f1 = p1 * v.iter().map(|&vg| normal_pdf(x, tau + psi, vg)).sum::<f64>() / n;
        let f2 = p2 * v.iter().map(|&vg| normal_pdf(x, tau - psi, vg)).sum::<f64>() / n;
        t.row([sig(x), sig(f0), sig(f1), sig(f2), sig(f0 + f1 + f2)])?;
    }
    t.finish()?;

    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &d {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let mut t = Table::create(out_dir.join("histogram.csv"), &["lower", "upper", "count", "density"])?;
    for (k, &c) in counts.iter().enumerate() {
        let a = lo + width * k as f64;
        t.row([sig(a), sig(a + width), c.to_string(), sig(c as f64 / (n * width))])?;
    }
    t.finish()
}

/// Accuracy and FDR curves and power per method, from a study directory.
pub fn report_study(study_dir: &Path, out_dir: &Path) -> Result<()> {
    let study = Frame::read(&study_dir.join("study.csv"))?;
    let (js, jm, jt, jk, jv) = (
        study.col("scenario")?,
        study.col("method")?,
        study.col("threshold")?,
        study.col("metric")?,
        study.col("value")?,
    );
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut values: HashMap<(String, String, String, String), String> = HashMap::new();
    let mut power = Vec::new();
    for r in &study.rows {
        match r[jk].as_str() {
            "accuracy" | "fdr" => {
                let key = (r[js].clone(), r[jm].clone(), r[jt].clone());
                if !keys.contains(&key) {
                    keys.push(key.clone());
                }
                values.insert((key.0, key.1, key.2, r[jk].clone()), r[jv].clone());
            }
            "power" => power.push([r[js].clone(), r[jm].clone(), r[jv].clone()]),
            _ => {}
        }
    }
    ensure_dir(out_dir)?;
    let mut t = Table::create(out_dir.join("curves.csv"), &["scenario", "method", "threshold", "accuracy", "fdr"])?;
    for (s, m, th) in keys {
        let get = |k: &str| values.get(&(s.clone(), m.clone(), th.clone(), k.to_string())).cloned().unwrap_or_default();
        let (acc, fdr) = (get("accuracy"), get("fdr"));
        t.row([s, m, th, acc, fdr])?;
    }
    t.finish()?;
    let mut t = Table::create(out_dir.join("power.csv"), &["scenario", "method", "power"])?;
    for r in power {
        t.row(r)?;
    }
    t.finish()
}

#[derive(Serialize)]
struct ManifestScenario<'a> {
    name: &'a str,
    scenario: &'a SimScenario,
    failures: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    version: &'a str,
    methods: Vec<String>,
    thresholds: &'a [f64],
    outputs: [&'a str; 1],
    scenarios: Vec<ManifestScenario<'a>>,
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(ebmix_core::real::median(v))
    }
}

/// Runs every scenario and writes `study.csv` (long format) and `manifest.json`.
pub fn cmd_simulate(plan: &SimPlan) -> Result<()> {
    ensure_dir(&plan.output)?;
    let mut table = Table::create(
        plan.output.join("study.csv"),
        &["scenario", "method", "threshold", "metric", "value"],
    )?;
    let mut manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        methods: plan.methods.iter().map(Method::to_string).collect(),
        thresholds: &plan.thresholds,
        outputs: ["study.csv"],
        scenarios: Vec::new(),
    };
    for (name, scenario) in &plan.scenarios {
        info!("scenario {name}: {} replicates of {} genes", scenario.replicates, scenario.genes);
        let study = run_study(scenario, &plan.methods, &plan.thresholds)?;
        let mut failures = Vec::new();
        for ms in &study.methods {
            let m = ms.method.to_string();
            let mut put = |th: String, metric: &str, v: String| table.row([name.clone(), m.clone(), th, metric.to_string(), v]);
            if let Some(p) = ms.power {
                put(String::new(), "power", sig(p))?;
            }
            if let Some(v) = median(&ms.p1_estimates) {
                put(String::new(), "p1_median", sig(v))?;
            }
            if let Some(v) = median(&ms.psi_estimates) {
                put(String::new(), "psi_median", sig(v))?;
            }
            put(String::new(), "non_converged", ms.non_converged.to_string())?;
            put(String::new(), "failures", ms.failures.len().to_string())?;
            for c in &ms.curve {
                put(sig(c.threshold), "accuracy", sig(c.accuracy))?;
                put(sig(c.threshold), "fdr", sig(c.fdr))?;
            }
            failures.extend(ms.failures.iter().map(|f| format!("{m}: {f}")));
        }
        for (metric, v) in [("alpha_median", &study.alpha_estimates), ("beta_median", &study.beta_estimates)] {
            if let Some(x) = median(v) {
                table.row([name.clone(), "prior".into(), String::new(), metric.into(), sig(x)])?;
            }
        }
        for f in &failures {
            warn!("scenario {name}: {f}");
        }
        manifest.scenarios.push(ManifestScenario {
            name,
            scenario,
            failures,
        });
    }
    table.finish()?;
    write_json(&plan.output.join("manifest.json"), &manifest)
}
