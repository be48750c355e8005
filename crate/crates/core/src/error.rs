use thiserror::Error;

/// Errors raised by the physical models and the simulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A wavelength falls outside a sampled table; extrapolation is refused.
    #[error("{what} = {value} is outside the tabulated range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A configuration value violates an invariant. `field` names the offending field.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("stream length mismatch: signal has {signal} gates, idler has {idler}")]
    LengthMismatch { signal: usize, idler: usize },

    /// CAR is undefined when the accidental rate is zero.
    #[error("coincidence-to-accidental ratio is undefined: zero accidentals")]
    UndefinedCar,

    #[error("root finding did not converge: {0}")]
    NonConvergence(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
