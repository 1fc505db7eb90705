use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("exact engine size limit: n_sites = {n_sites} exceeds cap {cap}")]
    SizeLimit { n_sites: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "steady state is not unique (kernel dimension > 1): {detail}; \
         a drive (gamma_s + gamma_d > 0) is required"
    )]
    Degenerate { detail: String },

    #[error("integration failure at t = {time}: {detail}")]
    Integration { time: f64, detail: String },

    #[error("state invariant violated: {0}")]
    Invariant(String),

    #[error("observable is not Hermitian: imaginary part of expectation {0:e}")]
    NotHermitian(f64),

    #[error("trajectory step failure at t = {time}: {detail}")]
    TrajectoryStep { time: f64, detail: String },

    #[error("diffusion coefficient undefined: density difference n1 - nN = {0:e}")]
    UndefinedDiffusion(f64),

    #[error("bond currents not uniform: relative spread {spread:e} exceeds {tolerance:e}")]
    NonUniformCurrent { spread: f64, tolerance: f64 },

    #[error("fit refused: {found} valid points, at least {required} required")]
    InsufficientPoints { found: usize, required: usize },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("pole of the diffuson propagator at k^2 = 0, eps = 0")]
    Pole,

    #[error("infinite diffusion constant: gamma = 0 is the free-gas limit")]
    InfiniteDiffusion,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
