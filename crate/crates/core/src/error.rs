use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid morphology: {0}")]
    Morphology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric fault at sample {sample}: {reason}")]
    NumericFault { sample: usize, reason: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("stage `{stage}` failed{}: {source}", condition.map(|c| format!(" (condition {c})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        condition: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str, condition: Option<usize>) -> Self {
        Error::Stage { stage, condition, source: Box::new(self) }
    }

    /// Process exit code: 1 configuration, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Morphology(_) | Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Shape { .. } | Error::InsufficientData(_) | Error::Data(_) => 2,
            Error::Io(_) | Error::Csv(_) => 2,
            Error::NumericFault { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
