use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("beamformer domain mismatch: expected {expected}, found {found}")]
    DomainMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("phase of a zero weight is undefined")]
    ZeroWeight,

    #[error("duplicate capacitance {0} pF in tuning data")]
    DuplicateCapacitance(f64),

    #[error("tuning table is empty")]
    EmptyTable,

    #[error("gain oracle failed: {0}")]
    Oracle(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
