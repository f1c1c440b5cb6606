use thiserror::Error;

/// Errors raised by the model operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("altitude {0} m outside troposphere range [0, 11000]")]
    AltitudeOutOfRange(f64),

    #[error("unphysical climb at sample {index}: |dh/dt| = {climb_rate} m/s exceeds airspeed {speed} m/s")]
    UnphysicalClimb {
        index: usize,
        climb_rate: f64,
        speed: f64,
    },

    #[error("flight path angle {gamma} rad at sample {index} outside [{min}, {max}]")]
    PathAngleOutOfBounds {
        index: usize,
        gamma: f64,
        min: f64,
        max: f64,
    },

    #[error("{quantity} limit exceeded: {value} > {limit}")]
    LimitExceeded {
        quantity: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("cell voltage {voltage} V outside [{min}, {max}] V")]
    VoltageWindow { voltage: f64, min: f64, max: f64 },

    #[error("aircraft mass {mass} kg exceeds maximum {max} kg by {} kg", mass - max)]
    MassExceeded { mass: f64, max: f64 },

    #[error("fixed-point iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("correlation validity violated: {0}")]
    CorrelationValidity(String),

    #[error("insufficient excitation: {0}")]
    NoExcitation(String),

    #[error("singular or underdetermined problem: {0}")]
    Singular(String),

    #[error("explicit step unstable: dt = {dt} s must be below {limit} s")]
    StepUnstable { dt: f64, limit: f64 },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidInput(msg.into())
}
