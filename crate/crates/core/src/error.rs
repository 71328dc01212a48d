use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {requested} exceeds the configured cap {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("copies exhausted for item {item}: requested {requested}, remaining {remaining}")]
    CopyExhausted { item: usize, requested: usize, remaining: usize },

    #[error("degenerate states: {0}")]
    DegenerateStates(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("phase {phase:e} is within the degeneracy tolerance of zero")]
    DegeneratePhase { phase: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Strips any trial wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Capacity { .. } | Error::CopyExhausted { .. } => 3,
            Error::Config(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::InvalidState(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Toml(_)
            | Error::Csv(_) => 2,
            _ => 1,
        }
    }
}
