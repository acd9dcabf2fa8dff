//! Multiple-source adaptation on finite supports.
//!
//! A target distribution `P` is served by `k` source distributions `Q_1..Q_k`,
//! each paired with a hypothesis `h_i` that is accurate on its own source.
//! This crate provides the pieces needed to combine the `h_i` into a single
//! hypothesis with a guaranteed loss on `P`:
//!
//! * Renyi entropies and divergences of arbitrary order, in bits
//!   ([`divergence`]), with infinite divergence as a first-class value.
//! * Distribution-weighted, smoothed, and r-norm combining rules ([`combine`]).
//! * Simplex solvers: projection of `P` onto the mixture family
//!   `{sum_i lambda_i Q_i}` in Renyi divergence, and a robust min-max fit of
//!   the smoothed combiner ([`fit`]), plus the adversarial target construction
//!   showing the loss guarantees are near-tight.
//! * Calculators and randomized verifiers for the divergence-based
//!   generalization bounds ([`bounds`], [`suites`]).
//! * A reproducible synthetic Gaussian-grid experiment ([`experiment`]) driven
//!   by counter-based random streams ([`rng`]).
//!
//! All logarithms are base 2: entropies, divergences, and solver objectives
//! are reported in bits.

pub mod bounds;
pub mod combine;
pub mod divergence;
pub mod experiment;
pub mod fit;
pub mod json;
pub mod model;
pub mod rng;
pub mod suites;



pub use bounds::{BoundReport, NormBoundCert, TheoremId};
pub use combine::{combine, CombineRule};
pub use divergence::{d_alpha, renyi_divergence, renyi_entropy, AlphaOrder, DivergenceValue};
pub use experiment::{
    csv_string, discretize_gaussian_mixture, empirical_dist, run_gaussian_experiment,
    run_multi_function_experiment, sample_dist, train_least_squares, ExperimentResult,
    ExperimentRow, GaussianGridConfig,
};
pub use fit::{
    adversarial_target, fit_mixture, robust_fit, AdversarialTarget, FitResult, RobustFitResult,
};

pub use model::{Dist, Hypothesis, LossKind, LossSpec, SimplexWeights, Support};

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operands are defined on different supports")]
    SupportMismatch,
    #[error("duplicate support point id {0:?}")]
    DuplicatePoint(String),
    #[error("probs[{index}] = {value} is not a finite non-negative number")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, further than {tol} from 1")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("values[{index}] = {value} outside [0, {bound}]")]
    ValueOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("values[{index}] = {value} is not Boolean (exactly 0 or 1)")]
    NonBoolean { index: usize, value: f64 },
    #[error("invalid order alpha: {0}")]
    InvalidAlpha(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("malformed input{}: {msg}", context_suffix(.context))]
    MalformedInput { context: String, msg: String },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
