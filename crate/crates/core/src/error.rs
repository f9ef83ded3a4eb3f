use thiserror::Error;

use crate::params::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiceError {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParameters(Vec<Violation>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("transition matrix cannot be re-discretized: {0}")]
    Discretization(String),

    #[error("policy has {actual} periods, model expects {expected}")]
    PolicyLength { expected: usize, actual: usize },

    #[error("abatement {value} at period {period} outside [0, {max}]")]
    PolicyOutOfBounds { period: usize, value: f64, max: f64 },

    #[error("degenerate trajectory at period {period}: {reason}")]
    DegenerateTrajectory { period: usize, reason: String },

    #[error("period {period} outside the horizon of {periods} periods")]
    PeriodOutOfRange { period: usize, periods: usize },

    #[error("trajectories are on different time grids")]
    GridMismatch,

    #[error("price undefined: total emissions over the horizon are {total}")]
    UndefinedPrice { total: f64 },

    #[error("finite-difference estimate for period {period} failed: {reason}")]
    Sensitivity { period: usize, reason: String },

    #[error("no internal rate of return in [{low}, {high}]")]
    NoRoot { low: f64, high: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
