use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("dyadic scale {q} is not resolved on this grid (needs |xi| up to {needed:.3}, Nyquist {nyquist:.3})")]
    Unresolved { q: i32, needed: f64, nyquist: f64 },
    #[error("time series is empty")]
    EmptySeries,
    #[error("time stamps must be strictly increasing")]
    NonIncreasingTimes,
    #[error("homogeneous norm requested for a field with nonzero mean ({0:.3e})")]
    NonzeroMean(f64),
    #[error("insufficient band headroom: spectrum reaches {reach:.3} but products need it below {limit:.3}")]
    Headroom { reach: f64, limit: f64 },
    #[error("time {t:.4} lies outside the fidelity window (max {t_max:.4})")]
    FidelityWindow { t: f64, t_max: f64 },
    #[error("positivity margin violated: smallest eigenvalue {min_eig:.4} < {margin:.4}")]
    Positivity { min_eig: f64, margin: f64 },
    #[error("CFL violation: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("iteration stopped contracting at step {step}: differences {history:?}")]
    NonContraction { step: usize, history: Vec<f64> },
    #[error("caustic at t = {time:.4} (|det J| = {det:.3e})")]
    Caustic { time: f64, det: f64 },
    #[error("under-resolved quadrature: {0}")]
    Quadrature(String),
    #[error("interval budget violated: {0}")]
    Budget(String),
    #[error("single time step [{t0:.4}, {t1:.4}] alone exceeds budget {budget}")]
    AtomicViolation { t0: f64, t1: f64, budget: String },
    #[error("test-function family is empty")]
    EmptyFamily,
    #[error("symbol support is not certified: {0}")]
    UncertifiedSupport(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate fit input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
