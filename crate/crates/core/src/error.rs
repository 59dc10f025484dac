use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance not PSD")]
    CovarianceNotPsd,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solve failed")]
    SolveFailed,

    #[error("observation outside distortion range")]
    OutsideDistortionRange,

    #[error("rapp inversion did not converge")]
    InversionFailed,

    #[error("degenerate importance weights (effective sample size {ess:.1})")]
    DegenerateWeights { ess: f64 },

    #[error("mismatch requires linear model")]
    MismatchRequiresLinear,

    #[error("degenerate sample covariance")]
    DegenerateSampleCovariance,

    #[error("training diverged (reduce learning rate)")]
    TrainingDiverged,

    #[error("nothing to write")]
    NothingToWrite,

    #[error("{}", config_message(.line, .key, .message))]
    Config {
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("at sweep point {point}: {source}")]
    AtSweepPoint { point: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: &Option<usize>, key: &str, message: &str) -> String {
    match line {
        Some(line) => format!("config line {line}, key `{key}`: {message}"),
        None => format!("config key `{key}`: {message}"),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(line: Option<usize>, key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerics or I/O.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => true,
            Error::AtSweepPoint { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
