use thiserror::Error;

use crate::data::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {}", format_violations(.0))]
    InvalidDataset(Vec<Violation>),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),

    /// An operation that needs hidden ground truths received non-oracle data.
    #[error("{operation} requires an oracle-mode dataset (hidden truths absent)")]
    NotOracle { operation: &'static str },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("score set is empty")]
    EmptyScoreSet,

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("divergence at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("lemma precondition violated: {0}")]
    LemmaPrecondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
