use std::path::PathBuf;

/// Errors produced anywhere in the simulation and learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    InvalidInput { what: &'static str, reason: String },

    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("patch count {count} exceeds the configured cap of {cap}")]
    PatchCapExceeded { count: u64, cap: u64 },

    #[error("path delay {delay_ns:.3} ns lies outside the {window_ns:.3} ns window")]
    DelayOutsideWindow { delay_ns: f64, window_ns: f64 },

    #[error("filter impulse response truncated with {tail:e} of its mass outside the kernel")]
    FilterTruncated { tail: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("too few records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("training diverged at epoch {epoch}: objective is not finite")]
    Diverged { epoch: usize },

    #[error("received power must be positive, got {0}")]
    NonPositivePower(f64),

    #[error("singular anchor geometry: {0}")]
    SingularGeometry(String),

    #[error("nothing to plot: {0}")]
    EmptyResult(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
