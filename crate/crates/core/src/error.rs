use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    #[error("time step {dt:.3e} fell below dt_min {dt_min:.3e} at t = {t:.12}")]
    TimestepUnderflow { t: f64, dt: f64, dt_min: f64 },

    #[error("non-finite values produced at t = {t:.12}")]
    NumericBlowup { t: f64 },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("neck window of half-width {half_width:.6e} does not fit around node {node}")]
    WindowOutOfRange { node: usize, half_width: f64 },

    #[error("no admissible neck: {0}")]
    NoNeckFound(String),

    #[error("cap condition `{which}` violated at r = {at:.6} (margin {margin:.3e})")]
    CapConditionViolated { which: String, at: f64, margin: f64 },

    #[error("cap construction failed: {0}")]
    CapConstructionFailed(String),

    #[error("ODE integration failed: {0}")]
    IntegrationFailed(String),

    #[error("profile is not monotone between pole and bump: {0}")]
    NotMonotone(String),

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("barrier patch order violated at tau = {tau:.6}: {detail}")]
    PatchOrderViolated { tau: f64, detail: String },

    #[error("no admissible barrier parameters: {0}")]
    NoAdmissibleParams(String),

    #[error("blow-up time {t_blowup} is not after the profile time {t}")]
    BadT { t: f64, t_blowup: f64 },

    #[error("input is not strictly increasing: {0}")]
    NotIncreasing(String),

    #[error("initial data is not normalized: min nu = {nu_min:.6e} < -1")]
    NotNormalized { nu_min: f64 },

    #[error("no bump found in snapshot at t = {t:.12}")]
    NoBump { t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
