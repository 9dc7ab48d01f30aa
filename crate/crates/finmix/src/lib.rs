//! Bayesian finite mixture models with a prior on the number of components.
//!
//! The model is hierarchical: a count prior draws the number of components
//! `K`, a weights prior draws a point on the open simplex, a base prior draws
//! one parameter vector per component, and the data are i.i.d. from the
//! resulting mixture. The crate provides:
//!
//! - [`param_space`]: the disjoint-union parameter space, a capped Euclidean
//!   metric on it, permutation actions, label-invariant neighborhoods, and a
//!   canonicalization map that fixes the component order.
//! - [`families`]: built-in component families (Normal with known variance,
//!   Normal with unknown mean and variance, Poisson) with conjugate
//!   cluster marginals used by the samplers.
//! - [`priors`]: count/weights/parameter priors, the partition law obtained
//!   by integrating out the weights, and numeric checkers for the prior
//!   regularity conditions.
//! - [`posterior`]: an exact enumeration engine for small data sets and a
//!   trans-dimensional allocation sampler for larger ones, plus estimators
//!   for `Pr(K = k | data)` and neighborhood posterior mass.
//! - [`experiments`]: a seeded, reproducible experiment runner and the CSV
//!   schemas consumed by the `finmix` CLI.

pub mod assignment;
pub mod experiments;
pub mod families;
pub mod math;
pub mod param_space;
pub mod posterior;
pub mod priors;

pub use families::{ClusterStats, Family};
pub use param_space::{MixtureParams, NeighborhoodSpec, Permutation};
pub use priors::{KPrior, ParamsPrior, PriorSpec, WeightsPrior};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("not a permutation of 0..{len}: {detail}")]
    InvalidPermutation { len: usize, detail: String },

    #[error("invalid mixture parameters: {0}")]
    InvalidParams(#[from] param_space::Violation),

    #[error("parameter vector outside the family domain of {family}: {value:?}")]
    OutsideDomain { family: &'static str, value: Vec<f64> },

    #[error("invalid data point for family {family}: {value}")]
    InvalidData { family: &'static str, value: f64 },

    #[error("component count must be >= 1, got {0}")]
    InvalidK(usize),

    #[error("assignment label {label} out of range for k = {k}")]
    InvalidLabel { label: usize, k: usize },

    #[error("operation requires {required}, got {got}")]
    UnsupportedPrior { required: &'static str, got: &'static str },

    #[error("enumeration budget exceeded: {states} states, budget {budget}")]
    BudgetExceeded { states: u128, budget: u128 },

    #[error("rejection sampler gave up after {attempts} attempts (repulsion scale too aggressive?)")]
    RejectionFailure { attempts: usize },

    #[error("no draws to estimate from")]
    EmptyDraws,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
