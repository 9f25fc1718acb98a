use std::path::PathBuf;

/// Errors surfaced by the simulator, learners and harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("low-tier mask {low:#07b} is not a subset of high-tier mask {high:#07b}")]
    MaskViolation { low: u32, high: u32 },
    #[error("high-tier step at slot {slot} is not on a cycle boundary (T = {cycle})")]
    PhaseError { slot: u64, cycle: usize },
    #[error("episode has ended; call reset_episode first")]
    EpisodeEnded,
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
