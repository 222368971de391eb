use std::path::PathBuf;

use crate::optimizer::IterTrace;

pub type Result<T, E = JcasError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum JcasError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e}, tolerance {tolerance:e})")]
    NotPositiveDefinite {
        pivot: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("cannot place {count} directions {min_sep_deg} deg apart inside +/-{range_deg} deg")]
    SeparationInfeasible {
        count: usize,
        min_sep_deg: f64,
        range_deg: f64,
    },

    #[error("combiner column {0} is zero")]
    ZeroCombiner(usize),

    #[error("auxiliary theta for target {0} vanished")]
    ZeroTheta(usize),

    #[error("non-finite iterate at outer layer {layer}")]
    NonFinite {
        layer: usize,
        completed: Box<IterTrace>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint schedule {found} does not match solver schedule {expected}")]
    ScheduleMismatch { expected: String, found: String },

    #[error("no trained checkpoint available for the unfolded solver")]
    MissingCheckpoint,

    #[error("malformed file {path}: at `{field}`: {message}")]
    Format {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl JcasError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JcasError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        JcasError::DimensionMismatch(msg.into())
    }
}
