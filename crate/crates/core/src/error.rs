use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pitch angle {theta:.4} rad is within the gimbal margin of ±π/2")]
    GimbalLock { theta: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("config parse error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("initial state violates box bounds: {0}")]
    InfeasibleBounds(String),

    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),

    #[error("solver exceeded {iterations} iterations (max defect {max_defect:.3e})")]
    MaxIterationsExceeded { iterations: usize, max_defect: f64 },

    #[error("line search failed at iteration {iteration}")]
    LineSearchFailure { iteration: usize },

    #[error("only {converged} of {attempted} trajectories converged")]
    ConvergenceRateTooLow { converged: usize, attempted: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")]
    NyquistViolation { cutoff: f64, nyquist: f64 },

    #[error("series of {len} samples is too short (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("flight diverged at t = {time:.3} s: {reason}")]
    Diverged { time: f64, reason: String },

    #[error("KKT system of the snap problem is singular")]
    SingularKkt,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
