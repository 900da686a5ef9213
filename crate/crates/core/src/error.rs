use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),

    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("stream is not sorted: record {index} at {time_ps} ps precedes its predecessor")]
    UnsortedStream { index: usize, time_ps: u64 },

    #[error("record {index} has unknown channel {channel} (expected 0 or 1)")]
    UnknownChannel { index: usize, channel: u8 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("correlator input {which} is not sorted at index {index}")]
    UnsortedInput { which: &'static str, index: usize },

    #[error("correlation window [{tau_min}, {tau_max}) ps holds no bins")]
    EmptyWindow { tau_min: f64, tau_max: f64 },

    #[error("normalisation needs positive rates and duration, got {0}")]
    DivisionByZeroConfig(String),

    #[error("fit did not converge after {iterations} iterations (cost {cost:e})")]
    NonConvergence { iterations: usize, cost: f64 },

    #[error("Jacobian is singular or non-finite: {0}")]
    SingularJacobian(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid vapour-pressure coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("pressure must be positive, got {0} Pa")]
    NonPositivePressure(f64),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "IoFailure",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::UnsortedStream { .. } => "UnsortedStream",
            Error::UnknownChannel { .. } => "UnknownChannel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnsortedInput { .. } => "UnsortedInput",
            Error::EmptyWindow { .. } => "EmptyWindow",
            Error::DivisionByZeroConfig(_) => "DivisionByZeroConfig",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::SingularJacobian(_) => "SingularJacobian",
            Error::DegenerateData(_) => "DegenerateData",
            Error::InvalidCoefficients(_) => "InvalidCoefficients",
            Error::NonPositivePressure(_) => "NonPositivePressure",
            Error::Json(_) => "MalformedJson",
            Error::Csv(_) => "MalformedCsv",
        }
    }
}
