use thiserror::Error;

use crate::model::ModelKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shape or layout problem that no amount of numerical care can fix.
    #[error("structural error: {0}")]
    Structure(String),

    /// Genes without residual degrees of freedom.
    #[error("{} gene(s) have no residual degrees of freedom: {}", genes.len(), genes.join(", "))]
    InsufficientReplicates { genes: Vec<String> },

    #[error(
        "optimizer did not converge after {iterations} iterations \
         (best point {best:?}, objective {objective}, gradient norm {gradient_norm})"
    )]
    NoConvergence {
        iterations: usize,
        best: Vec<f64>,
        objective: f64,
        gradient_norm: f64,
    },

    #[error("moment equations have no valid solution (implied alpha = {alpha}); use maximum likelihood")]
    MomentsUnavailable { alpha: f64 },

    #[error(
        "{0} has fixed gene-specific effects, so the mixing proportion is not identifiable; \
         use the fixed-effect divergence diagnostic or fixed-effect statistics instead"
    )]
    NonIdentifiable(ModelKind),

    #[error("three-component mixtures require a random-mean model (RR or RG), got {0}")]
    UnsupportedComponents(ModelKind),
}

pub type Result<T> = std::result::Result<T, Error>;
