use thiserror::Error;

pub type Result<T, E = GemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GemError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("schema mismatch: expected {expected} features, found {found}")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaIdMismatch { expected: String, found: String },

    #[error("value {value} is outside the domain of feature `{feature}`")]
    ValueOutOfDomain { feature: String, value: String },

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("completion set is empty for observation {0}")]
    EmptyCompletion(String),

    #[error("mask {mask} is not supported by this domain: {reason}")]
    UnsupportedMask { mask: String, reason: String },

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("invalid noise level {0}: must lie strictly between 0 and 1")]
    InvalidNoise(f64),

    #[error("noise level {0} is not one of the support values")]
    NotInNoiseSupport(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(
        "blind-spot support of {size} masks exceeds the enumeration cap of {cap}; \
         use gibbs_posterior instead"
    )]
    SupportTooLarge { size: u128, cap: usize },

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("record {index}: stored error flag {stored} disagrees with derived flag {derived}")]
    ErrorFlagMismatch {
        index: usize,
        stored: u8,
        derived: u8,
    },

    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("index {index} out of range for dataset of {len} demonstrations")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
