use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid coupling profile: {0}")]
    InvalidProfile(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("coupling profile is singular at t = {t} (untruncated optimal profile)")]
    Singularity { t: f64 },

    #[error("time {t} outside [0, {t_end}]")]
    OutOfRange { t: f64, t_end: f64 },

    #[error("non-finite value during integration at step {step} (t = {t})")]
    Numerical { step: usize, t: f64 },

    #[error("noise kernels were not tracked for this run")]
    KernelsUnavailable,

    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("non-identical oscillators: omega0 differs by {relative:.3e} (limit 1e-6)")]
    NonIdenticalOscillators { relative: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
