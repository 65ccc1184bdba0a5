use thiserror::Error;

pub type Result<T, E = NvError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("ambiguous eigenstate labeling (best and runner-up assignments differ by {margin:e})")]
    AmbiguousLabeling { margin: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("denominator transition strength {strength:e} is degenerate at theta = {theta} rad")]
    DegenerateDenominator { theta: f64, strength: f64 },

    #[error("transition table is empty")]
    EmptyTable,

    #[error("steady state is not unique (null-space dimension {dim})")]
    NonUniqueSteadyState { dim: usize },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("fit failure ({model}): {reason}")]
    FitFailure { model: String, reason: String },

    #[error("non-positive linewidth {0}")]
    NonPositiveWidth(f64),

    #[error("no field solution reproduces the requested frequencies")]
    NoSolution,

    #[error("ill-conditioned inversion (|det J| = {det:e}); B = {b_gauss} G, theta = {theta_rad} rad")]
    IllConditioned {
        det: f64,
        b_gauss: f64,
        theta_rad: f64,
    },

    #[error("level set is empty")]
    EmptyLocus,

    #[error("family {0} not present in transition table")]
    MissingFamily(String),
}

impl NvError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NvError::InvalidParameter(msg.into())
    }

    pub(crate) fn fit(model: &str, reason: impl Into<String>) -> Self {
        NvError::FitFailure {
            model: model.to_string(),
            reason: reason.into(),
        }
    }
}
