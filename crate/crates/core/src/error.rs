use thiserror::Error;

/// Errors raised by the solvers and their plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("box policy violated: {0}")]
    BoxPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("velocity {speed} is not subsonic (v_crit = {v_crit})")]
    Supersonic { speed: f64, v_crit: f64 },

    #[error("operator is indefinite on the deflated space (Rayleigh quotient {rayleigh:.6e})")]
    Indefinite { rayleigh: f64 },

    #[error("right-hand side lies in the kernel (removed fraction {removed:.3e})")]
    RhsInKernel { removed: f64 },

    #[error("least-squares fit is rank deficient: {0}")]
    RankDeficient(String),

    #[error("no momentum root: {0}")]
    RootNotBracketed(String),

    #[error("NaN encountered at step {step}")]
    NanDetected { step: usize },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Config(#[from] crate::io::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
