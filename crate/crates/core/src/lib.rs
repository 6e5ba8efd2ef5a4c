//! Empirical Bayes mixture models for two-group and multi-group differential
//! expression.
//!
//! The numeric core is generic over the scalar type (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod em;
pub mod error;
pub mod inference;
pub mod model;
pub mod multi;
pub mod optim;
pub mod prior;
pub mod real;
pub mod simulation;

pub use em::{
    auto_init, e_step, error_variances, evaluate, fit, fixed_effect_divergence, laplace_complete_loglik, laplace_gene_likelihood,
    m_step, DivergenceTrace, EmConfig, EmIteration, EmTrace, FitResult, Init, Posteriors,
};
pub use error::{Error, Result};
pub use inference::{
    bh_procedure, classify_local_fdr, decide, fixed_effect_statistics, likelihood_ratio, theoretical_null_pvalues,
    BhResult, DecisionConfig, FixedEffectStats, GeneInference, LrStats,
};
pub use model::{
    paired_summarize, summarize, Components, EffectSpread, ErrorVarianceModel, ExpressionMatrix, GeneSummaries,
    MixtureParams, ModelKind,
};
pub use multi::{
    fit_multi, lrt_multi, summarize_multi, ContrastMatrix, MultiConfig, MultiFitResult, MultiLr, VectorMixtureParams,
    VectorSummaries,
};
pub use prior::{fit_variance_prior, fit_variance_prior_moments, PriorMethod, VariancePrior};
pub use real::Real;

pub type Matrix = ExpressionMatrix<f64>;
pub type Summaries = GeneSummaries<f64>;
pub type Params = MixtureParams<f64>;
pub type Prior = VariancePrior<f64>;
pub type Fit = FitResult<f64>;
pub type Inference = GeneInference<f64>;
