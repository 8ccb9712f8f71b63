use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{given} values do not fit in {slots} slots")]
    TooManyValues { given: usize, slots: usize },

    #[error("level budget exhausted: operation needs level {needed}, ciphertext is at {available}")]
    LevelExhausted { needed: u32, available: u32 },

    #[error("plaintext length {given} does not match slot count {slots}")]
    LengthMismatch { given: usize, slots: usize },

    #[error("padding slot {slot} holds {value}, expected zero")]
    DirtyPadding { slot: usize, value: f64 },

    #[error("target is not finite at node {node} (x = {x})")]
    NonFiniteTarget { node: usize, x: f64 },

    #[error("slot {slot} value {value} lies outside [{lo}, {hi}]")]
    DomainViolation { slot: usize, value: f64, lo: f64, hi: f64 },

    #[error("Newton iteration diverged: |y| reached {magnitude}")]
    Divergence { magnitude: f64 },

    #[error("variance {value} is too small for an inverse square root")]
    DegenerateVariance { value: f64 },

    #[error("mean {value} is too close to zero (threshold {threshold})")]
    NearZeroMean { value: f64, threshold: f64 },

    #[error("column is empty")]
    EmptyColumn,

    #[error("columns have different lengths ({left} vs {right})")]
    ColumnLengthMismatch { left: usize, right: usize },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?}")]
    UnparsableCell { row: usize, column: String, value: String },

    #[error("value at index {index} is not finite")]
    NonFiniteValue { index: usize },

    #[error("reference value at index {index} is zero")]
    ZeroReference { index: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by the debug-mode domain and degeneracy checks.
    pub fn is_domain_error(&self) -> bool {
        matches!(
            self,
            Error::DomainViolation { .. }
                | Error::Divergence { .. }
                | Error::DegenerateVariance { .. }
                | Error::NearZeroMean { .. }
                | Error::DirtyPadding { .. }
                | Error::LevelExhausted { .. }
                | Error::ZeroReference { .. }
                | Error::EmptyColumn
                | Error::NonFiniteTarget { .. }
                | Error::NonFiniteValue { .. }
        )
    }

    pub fn is_io_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::MissingColumn(_) | Error::UnparsableCell { .. }
        )
    }
}
