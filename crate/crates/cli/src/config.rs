//! Run configuration: TOML files merged with command-line flags.

use std::path::{Path, PathBuf};

use ebmix_core::simulation::{Generator, Method, SimScenario, VarianceLaw};
use ebmix_core::{Components, DecisionConfig, ModelKind, PriorMethod};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::io::Format;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Settings of `fit`, from a file, from flags, or both.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub groups: Option<Vec<String>>,
    pub group_file: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub components: Option<usize>,
    pub paired: Option<bool>,
    /// `helmert` or a path to a contrast file.
    pub contrast: Option<String>,
    pub prior_method: Option<PriorMethod>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub posterior_tol: Option<f64>,
    pub local_fdr: Option<f64>,
    pub fdr: Option<f64>,
    pub min_effect: Option<f64>,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),*) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_toml(path)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(mut self, over: RunConfig) -> Self {
        overlay!(
            self, over, input, output, format, groups, group_file, model, components, paired, contrast,
            prior_method, max_iters, tol, posterior_tol, local_fdr, fdr, min_effect, seed
        );
        self
    }

    pub fn resolve(self) -> Result<FitPlan> {
        let input = self.input.ok_or_else(|| usage("no input file given"))?;
        let output = self.output.ok_or_else(|| usage("no output directory given"))?;
        let model = self.model.unwrap_or(ModelKind::RR);
        if !model.is_random_mean() {
            return Err(usage(format!(
                "model {model} has fixed gene effects and cannot be fitted; use rr, rg, rf or rh"
            )));
        }
        let components = self.components.map(Components::from_count).transpose().map_err(|e| usage(e.to_string()))?;
        if components == Some(Components::Three) && !model.supports_three_components() {
            return Err(usage(format!("model {model} supports only two components")));
        }
        let groups = match (self.groups, self.group_file) {
            (Some(_), Some(_)) => return Err(usage("give either groups or a group file, not both")),
            (Some(g), None) => GroupSpec::Labels(g),
            (None, Some(p)) => GroupSpec::File(p),
            (None, None) => GroupSpec::Header,
        };
        let contrast = self.contrast.map(|c| {
            if c.eq_ignore_ascii_case("helmert") {
                ContrastSpec::Helmert
            } else {
                ContrastSpec::File(PathBuf::from(c))
            }
        });
        let em = EmSettings {
            max_iters: self.max_iters.unwrap_or(2000),
            tol: self.tol.unwrap_or(1e-8),
            posterior_tol: self.posterior_tol.unwrap_or(1e-6),
        };
        if em.max_iters == 0 || !(em.tol > 0.0) || !(em.posterior_tol > 0.0) {
            return Err(usage("max-iters, tol and posterior-tol must be positive"));
        }
        let decision = DecisionConfig {
            local_fdr_threshold: self.local_fdr.unwrap_or(0.2),
            fdr_level: self.fdr.unwrap_or(0.05),
            min_abs_effect: self.min_effect.unwrap_or(0.0),
        };
        decision.validate().map_err(|e| usage(e.to_string()))?;
        let format = self.format.unwrap_or_else(|| Format::from_path(&input));
        Ok(FitPlan {
            input,
            output,
            format,
            groups,
            model,
            components,
            paired: self.paired.unwrap_or(false),
            contrast,
            prior_method: self.prior_method.unwrap_or(PriorMethod::MaxLikelihood),
            em,
            decision,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupSpec {
    Labels(Vec<String>),
    File(PathBuf),
    Header,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContrastSpec {
    Helmert,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub posterior_tol: f64,
}

/// A validated `fit` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPlan {
    pub input: PathBuf,
    pub output: PathBuf,
    pub format: Format,
    pub groups: GroupSpec,
    pub model: ModelKind,
    /// `None` picks three components where the model allows it.
    pub components: Option<Components>,
    pub paired: bool,
    pub contrast: Option<ContrastSpec>,
    pub prior_method: PriorMethod,
    pub em: EmSettings,
    pub decision: DecisionConfig<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    LemmaLow,
    LemmaHigh,
    LimmaLow,
}

/// One simulation scenario: a preset with optional overrides.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: Option<String>,
    pub preset: Option<Preset>,
    pub generator: Option<Generator>,
    pub genes: Option<usize>,
    pub replicates: Option<usize>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub psi: Option<f64>,
    pub sigma_psi2: Option<f64>,
    pub v0: Option<f64>,
    pub tau: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub variance_law: Option<VarianceLaw>,
    pub seed: Option<u64>,
}

impl ScenarioSpec {
    pub fn merge(mut self, over: ScenarioSpec) -> Self {
        overlay!(
            self, over, name, preset, generator, genes, replicates, p1, p2, psi, sigma_psi2, v0, tau, n1, n2,
            alpha, beta, variance_law, seed
        );
        self
    }

    /// Builds the scenario; `default_seed` applies when no seed is set.
    pub fn build(&self, default_seed: u64) -> Result<SimScenario> {
        let p1 = self.p1.unwrap_or(0.05);
        let preset = self.preset.unwrap_or(match self.generator {
            Some(Generator::Limma) => Preset::LimmaLow,
            _ => Preset::LemmaLow,
        });
        let mut s = match preset {
            Preset::LemmaLow => SimScenario::lemma_low(self.psi.unwrap_or(3.0), p1),
            Preset::LemmaHigh => SimScenario::lemma_high(self.psi.unwrap_or(3.0), p1),
            Preset::LimmaLow => SimScenario::limma_low(self.v0.unwrap_or(1.0), p1),
        };
        s.seed = default_seed;
        overlay_scalar(&mut s, self);
        s.validate().map_err(|e| usage(e.to_string()))?;
        Ok(s)
    }
}

fn overlay_scalar(s: &mut SimScenario, o: &ScenarioSpec) {
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { s.$f = v; } )* };
    }
    set!(generator, genes, replicates, p2, psi, sigma_psi2, v0, tau, n1, n2, alpha, beta, variance_law, seed);
}

/// Settings of `simulate`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub output: Option<PathBuf>,
    /// Seed of the first scenario; later scenarios without their own seed
    /// use consecutive values.
    pub seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub thresholds: Option<Vec<f64>>,
    /// Applied to every scenario.
    pub defaults: Option<ScenarioSpec>,
    #[serde(default)]
    pub scenario: Vec<ScenarioSpec>,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_toml(path)
    }
}

/// A validated `simulate` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub output: PathBuf,
    pub methods: Vec<Method>,
    pub thresholds: Vec<f64>,
    pub scenarios: Vec<(String, SimScenario)>,
}

impl SimPlan {
    /// `flags` overrides every scenario of the file; without scenarios in the
    /// file the flags describe the only one.
    pub fn resolve(file: SimConfig, flags: SimConfig) -> Result<Self> {
        let output = flags.output.or(file.output).ok_or_else(|| usage("no output directory given"))?;
        let base_seed = flags.seed.or(file.seed).unwrap_or(1);
        let methods = match flags.methods.or(file.methods) {
            Some(list) => list
                .iter()
                .map(|m| m.parse::<Method>().map_err(|e| usage(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
            None => Method::all(),
        };
        if methods.is_empty() {
            return Err(usage("no methods selected"));
        }
        let thresholds = flags
            .thresholds
            .or(file.thresholds)
            .unwrap_or_else(ebmix_core::simulation::default_thresholds);
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(usage(format!("threshold {t} outside [0, 1]")));
        }
        let defaults = file.defaults.unwrap_or_default();
        let over = flags.defaults.unwrap_or_default();
        let specs = if file.scenario.is_empty() { vec![ScenarioSpec::default()] } else { file.scenario };
        let mut scenarios = Vec::with_capacity(specs.len());
        for (k, spec) in specs.into_iter().enumerate() {
            let spec = defaults.clone().merge(spec).merge(over.clone());
            let name = spec.name.clone().unwrap_or_else(|| format!("scenario{}", k + 1));
            if scenarios.iter().any(|(n, _)| n == &name) {
                return Err(usage(format!("duplicate scenario name {name:?}")));
            }
            let s = spec.build(base_seed + k as u64)?;
            scenarios.push((name, s));
        }
        Ok(SimPlan {
            output,
            methods,
            thresholds,
            scenarios,
        })
    }
}
