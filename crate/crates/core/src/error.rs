//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("sample index {index} out of range for {len} samples")]
    SampleIndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense Hessian for dimension {dim} exceeds the budget of {budget}")]
    HessianBudget { dim: usize, budget: usize },

    #[error("non-finite gradient at round {round}, client {client}, local step {step}")]
    Divergence {
        round: usize,
        client: usize,
        step: usize,
    },

    #[error("eigendecomposition failed to converge")]
    EigNoConvergence,

    #[error("matrix contains non-finite entries")]
    NonFiniteInput,

    #[error("Newton step is rank-deficient: residual {residual:.3e} of gradient norm lies outside the Hessian range")]
    RankDeficient { residual: f64 },

    #[error("{excluded} of {trials} residue trials diverged, more than the 10% exclusion cap")]
    TooManyDivergentTrials { excluded: usize, trials: usize },

    #[error("idx format: {0}")]
    IdxFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
