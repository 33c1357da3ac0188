//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaserError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("resonance enumeration requires exact rational parameters")]
    ExactnessRequired,

    #[error("no invariant measure exists for theta <= 0")]
    NoInvariantMeasure,

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NonHermitian(f64),

    #[error("truncation overflow at step {step}: leakage {leakage:.3e} exceeds budget {budget:.3e}")]
    TruncationOverflow {
        step: usize,
        leakage: f64,
        budget: f64,
    },

    #[error("initial support level {support} plus guard {guard} exceeds truncation {d}")]
    GuardViolation {
        support: usize,
        guard: usize,
        d: usize,
    },

    #[error("outcome horizons differ: {0} vs {1}")]
    HorizonMismatch(usize, usize),

    #[error("outcome horizon {0} exceeds the enumeration limit {1}")]
    HorizonTooLarge(usize, usize),

    #[error("measure weights sum to {0} and {1}; transport is infeasible")]
    WeightMismatch(f64, f64),

    #[error("local Gibbs state on an infinite sector requires theta > 0")]
    UnnormalizableSector,

    #[error("invalid configuration:\n{}", format_violations(.0))]
    Config(Vec<ConfigViolation>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A single configuration problem, addressed by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ConfigViolation {
    /// JSON-pointer path of the offending field, e.g. `/params` or `/seed`.
    pub pointer: String,
    pub message: String,
}

fn format_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(|x| format!("  {}: {}", x.pointer, x.message))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, MaserError>;
