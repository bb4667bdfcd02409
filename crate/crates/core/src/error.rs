use thiserror::Error;

use crate::spectral::Wavevector;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cutoff {0}: the Galerkin cutoff must be at least 1")]
    InvalidCutoff(i64),

    #[error("invalid wavevector {0:?}: the zero wavevector carries no mode")]
    InvalidWavevector(Wavevector),

    #[error("invalid polarization index {0}: expected 1 or 2")]
    InvalidPolarization(u8),

    #[error("mode {k:?}/{pol} is not in the truncated lattice with cutoff {cutoff}")]
    SubspaceMismatch { k: Wavevector, pol: u8, cutoff: u32 },

    #[error("fields live on different mode sets (cutoff {left} vs {right})")]
    ModeSetMismatch { left: u32, right: u32 },

    #[error("integer overflow in Smith normal form elimination")]
    Overflow,

    #[error("member {member} blew up at step {step}: non-finite state")]
    BlowUp { member: usize, step: usize },

    #[error("moment exponent p = {0} was not tracked during the simulation")]
    UntrackedMoment(f64),

    #[error("insufficient data: {got} samples, at least {need} required")]
    InsufficientData { got: usize, need: usize },

    #[error("degenerate sample: zero spread along axis {axis}, Silverman bandwidth undefined")]
    DegenerateSample { axis: usize },

    #[error("dimension {0} not supported: grids are limited to 1 <= d <= 3")]
    UnsupportedDimension(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error(
        "Fokker-Planck step at t = {time} produced value {min_value} below -{tolerance}; \
         reduce dt or enlarge the grid"
    )]
    FpInstability {
        time: f64,
        min_value: f64,
        tolerance: f64,
    },

    #[error(
        "heat kernel under-resolved: standard deviation {sd} spans only {ratio:.3} grid spacings \
         (spacing {spacing}, need 0.75); increase dt or refine the grid"
    )]
    KernelUnderResolved { sd: f64, spacing: f64, ratio: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("assumption check failed: {0}")]
    Assumption(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown statistic `{name}`; available: {options}")]
    UnknownStatistic { name: String, options: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Whether the error comes from invalid input rather than a failed
    /// computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidCutoff(_)
                | Error::InvalidWavevector(_)
                | Error::InvalidPolarization(_)
                | Error::SubspaceMismatch { .. }
                | Error::ModeSetMismatch { .. }
                | Error::UntrackedMoment(_)
                | Error::UnsupportedDimension(_)
                | Error::Parameter(_)
                | Error::Config { .. }
                | Error::Assumption(_)
                | Error::UnknownStatistic { .. }
        )
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
