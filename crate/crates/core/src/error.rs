//! Error types for every stage of the pipeline.
//!
//! Each enum exposes a stable upper-case `code()` used in reports and CLI
//! exit diagnostics.

use thiserror::Error;

/// Failures while building or evaluating model-level quantities.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model definition: {0}")]
    Invalid(String),
    #[error("quadrature unresolved for {context}: coarse {coarse:e} vs refined {fine:e}")]
    QuadratureUnresolved {
        context: String,
        coarse: f64,
        fine: f64,
    },
    #[error("scale function undefined at t = {t}: q* saturates at {sup:e} below 1/t")]
    RhoUndefined { t: f64, sup: f64 },
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Invalid(_) => "MODEL_INVALID",
            ModelError::QuadratureUnresolved { .. } => "QUADRATURE_UNRESOLVED",
            ModelError::RhoUndefined { .. } => "RHO_UNDEFINED",
        }
    }
}

/// Grid-level resolution failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("grid underresolved ({check}): measured {measured:e} exceeds {limit:e}")]
    Underresolved {
        check: &'static str,
        measured: f64,
        limit: f64,
    },
    #[error("grid mismatch: {0}")]
    Mismatch(String),
}

impl GridError {
    pub fn code(&self) -> &'static str {
        match self {
            GridError::Invalid(_) => "GRID_INVALID",
            GridError::Underresolved { .. } => "GRID_UNDERRESOLVED",
            GridError::Mismatch(_) => "GRID_MISMATCH",
        }
    }
}

/// Failures of the parametrix construction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParametrixError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid time ladder: {0}")]
    Ladder(String),
    #[error("singularity mismatch: small-time exponent {measured:.3} below declared {declared:.3}")]
    SingularityMismatch { measured: f64, declared: f64 },
    #[error("series diverging: term ratios {ratios:?} exceed 1 beyond k0 = {k0}")]
    SeriesDiverging { k0: usize, ratios: Vec<f64> },
}

impl ParametrixError {
    pub fn code(&self) -> &'static str {
        match self {
            ParametrixError::Model(e) => e.code(),
            ParametrixError::Grid(e) => e.code(),
            ParametrixError::Ladder(_) => "LADDER_INVALID",
            ParametrixError::SingularityMismatch { .. } => "SINGULARITY_MISMATCH",
            ParametrixError::SeriesDiverging { .. } => "SERIES_DIVERGING",
        }
    }
}

/// Failures of the measure hierarchy and envelope fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Parametrix(#[from] ParametrixError),
    #[error("no feasible envelope parameters: {0}")]
    NoFeasibleParams(String),
    #[error("invalid envelope input: {0}")]
    Invalid(String),
}

impl EnvelopeError {
    pub fn code(&self) -> &'static str {
        match self {
            EnvelopeError::Model(e) => e.code(),
            EnvelopeError::Parametrix(e) => e.code(),
            EnvelopeError::NoFeasibleParams(_) => "NO_FEASIBLE_PARAMS",
            EnvelopeError::Invalid(_) => "ENVELOPE_INVALID",
        }
    }
}

/// Failures of the Kato/Dynkin class checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KatoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("kernel ladder too short to resolve the small-time trend: {0}")]
    KernelRange(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

impl KatoError {
    pub fn code(&self) -> &'static str {
        match self {
            KatoError::Model(e) => e.code(),
            KatoError::KernelRange(_) => "KERNEL_RANGE",
            KatoError::InvalidMeasure(_) => "MEASURE_INVALID",
        }
    }
}

/// Failures of the independent oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("closed form unavailable for alpha = {0}")]
    UnsupportedAlpha(f64),
    #[error("large-jump intensity {rate:e} times step {dt:e} exceeds 0.1")]
    RateOverflow { rate: f64, dt: f64 },
    #[error("invalid simulation request: {0}")]
    Invalid(String),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::Model(e) => e.code(),
            OracleError::UnsupportedAlpha(_) => "UNSUPPORTED_ALPHA",
            OracleError::RateOverflow { .. } => "RATE_OVERFLOW",
            OracleError::Invalid(_) => "ORACLE_INVALID",
        }
    }
}

/// Artifact input/output failures.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed artifact: {0}")]
    Format(String),
}
