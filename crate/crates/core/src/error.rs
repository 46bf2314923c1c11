use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incompatible parameter layouts: {0}")]
    Layout(String),

    #[error("tape has no marked output node")]
    NoOutput,

    #[error("tape already replayed; call reset() before running backward again")]
    AlreadyReplayed,

    #[error("output node must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    /// A non-finite value was produced. `stage` names the pass that produced it.
    #[error("divergence at step {step:?} during {stage}")]
    Divergence { stage: String, step: Option<u64> },

    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step {step} outside schedule range 0..={total}")]
    ScheduleRange { step: u64, total: u64 },

    #[error("gradient norm is zero; the penalized gradient is undefined here")]
    ZeroGradient,

    #[error("power iteration broke down: iterate norm underflowed at iteration {0}")]
    PowerBreakdown(usize),

    #[error("oracle problem too large: {0} parameters (limit {1})")]
    OracleTooLarge(usize, usize),
}

impl Error {
    pub fn divergence(stage: impl Into<String>) -> Self {
        Error::Divergence {
            stage: stage.into(),
            step: None,
        }
    }

    /// Attaches a step index to a divergence error; other variants pass through.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Error::Divergence { stage, .. } => Error::Divergence {
                stage,
                step: Some(step),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
