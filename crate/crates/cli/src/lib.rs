//! Command-line surface of `ebmix`: ingestion, configuration and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ebmix_core::simulation::{Generator, VarianceLaw};
use ebmix_core::{DecisionConfig, ModelKind, PriorMethod};

use crate::config::{Preset, RunConfig, ScenarioSpec, SimConfig, SimPlan};
use crate::error::{CliError, Result};
use crate::io::Format;

#[derive(Debug, Parser)]
#[command(name = "ebmix", version, about = "Empirical Bayes mixture models for differential expression")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture model and write fit.json and genes.csv.
    Fit(FitArgs),
    /// Run a simulation study and write study.csv and manifest.json.
    Simulate(SimArgs),
    /// Re-apply decision thresholds to an existing fit.
    Classify(ClassifyArgs),
    /// Write plot-ready tables from a fit or a study.
    Report(ReportArgs),
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: ebmix_core::Error| e.to_string())
}

fn parse_prior_method(s: &str) -> std::result::Result<PriorMethod, String> {
    match s {
        "ml" | "max-likelihood" => Ok(PriorMethod::MaxLikelihood),
        "moments" => Ok(PriorMethod::Moments),
        _ => Err(format!("unknown prior method {s:?} (ml or moments)")),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Expression table (CSV or TSV).
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Group label of each sample column, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    /// Two-column sample-to-group map.
    #[arg(long)]
    pub group_file: Option<PathBuf>,
    /// rr, rg, rf or rh.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=3))]
    pub components: Option<u64>,
    #[arg(long)]
    pub paired: bool,
    /// `helmert` or a file with one contrast row per line.
    #[arg(long)]
    pub contrast: Option<String>,
    /// ml or moments.
    #[arg(long, value_parser = parse_prior_method)]
    pub prior_method: Option<PriorMethod>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub posterior_tol: Option<f64>,
    #[arg(long)]
    pub local_fdr: Option<f64>,
    #[arg(long)]
    pub fdr: Option<f64>,
    #[arg(long)]
    pub min_effect: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FitArgs {
    fn into_config(self) -> (Option<PathBuf>, RunConfig) {
        let cfg = RunConfig {
            input: self.input,
            output: self.out,
            format: self.format,
            groups: self.groups,
            group_file: self.group_file,
            model: self.model,
            components: self.components.map(|c| c as usize),
            paired: self.paired.then_some(true),
            contrast: self.contrast,
            prior_method: self.prior_method,
            max_iters: self.max_iters,
            tol: self.tol,
            posterior_tol: self.posterior_tol,
            local_fdr: self.local_fdr,
            fdr: self.fdr,
            min_effect: self.min_effect,
            seed: self.seed,
        };
        (self.config, cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// TOML study configuration; flags override every scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Methods to compare, e.g. rr,rg,rh,ff,or (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_parser = parse_generator)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub sigma_psi2: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = parse_law)]
    pub variance_law: Option<VarianceLaw>,
}

fn parse_generator(s: &str) -> std::result::Result<Generator, String> {
    match s {
        "lemma" => Ok(Generator::Lemma),
        "limma" => Ok(Generator::Limma),
        _ => Err(format!("unknown generator {s:?} (lemma or limma)")),
    }
}

fn parse_law(s: &str) -> std::result::Result<VarianceLaw, String> {
    match s {
        "inverse-gamma" => Ok(VarianceLaw::InverseGamma),
        "log-normal" => Ok(VarianceLaw::LogNormal),
        _ => Err(format!("unknown variance law {s:?} (inverse-gamma or log-normal)")),
    }
}

impl SimArgs {
    fn into_config(self) -> (Option<PathBuf>, SimConfig) {
        let spec = ScenarioSpec {
            name: None,
            preset: self.preset,
            generator: self.generator,
            genes: self.genes,
            replicates: self.replicates,
            p1: self.p1,
            p2: self.p2,
            psi: self.psi,
            sigma_psi2: self.sigma_psi2,
            v0: self.v0,
            tau: self.tau,
            n1: self.n1,
            n2: self.n2,
            alpha: self.alpha,
            beta: self.beta,
            variance_law: self.variance_law,
            seed: None,
        };
        let cfg = SimConfig {
            output: self.out,
            seed: self.seed,
            methods: self.methods,
            thresholds: self.thresholds,
            defaults: Some(spec),
            scenario: Vec::new(),
        };
        (self.config, cfg)
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Directory written by `fit`.
    pub fit_dir: PathBuf,
    /// Output directory (default: rewrite the fit directory).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub local_fdr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub fdr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub min_effect: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `fit`; produces density.csv and histogram.csv.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Directory written by `simulate`; produces curves.csv and power.csv.
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(args) => {
            let (file, flags) = args.into_config();
            let base = match file {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            commands::cmd_fit(&base.merge(flags).resolve()?)
        }
        Command::Simulate(args) => {
            let (file, flags) = args.into_config();
            let base = match file {
                Some(p) => SimConfig::load(&p)?,
                None => SimConfig::default(),
            };
            commands::cmd_simulate(&SimPlan::resolve(base, flags)?)
        }
        Command::Classify(args) => {
            let decision = DecisionConfig {
                local_fdr_threshold: args.local_fdr,
                fdr_level: args.fdr,
                min_abs_effect: args.min_effect,
            };
            let out = args.out.unwrap_or_else(|| args.fit_dir.clone());
            commands::cmd_classify(&args.fit_dir, &out, &decision)
        }
        Command::Report(args) => {
            if args.fit.is_none() && args.study.is_none() {
                return Err(CliError::Usage("report needs --fit or --study".into()));
            }
            if let Some(dir) = &args.fit {
                commands::report_fit(dir, &args.out, args.grid_points, args.bins)?;
            }
            if let Some(dir) = &args.study {
                commands::report_study(dir, &args.out)?;
            }
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 success, 1 usage, 2 data validation, 3 numerical failure.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
