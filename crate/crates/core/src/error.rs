use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ambient dimension n = {n} is not supported here (only n = 3)")]
    UnsupportedDimension { n: usize },

    #[error("sphere grid resolves degree {resolved} but degree {required} was requested; need at least {theta_nodes} x {phi_nodes} nodes")]
    UnderResolvedGrid { required: usize, resolved: usize, theta_nodes: usize, phi_nodes: usize },

    #[error("sampled function ends with a partial period: [{start}, {end}) holds {samples} of {per_period} samples")]
    PartialPeriod { start: f64, end: f64, samples: usize, per_period: usize },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("lag {lag} aliases on a grid of {n_lambda} points (|lag| must be < {half})", half = n_lambda / 2)]
    Aliasing { lag: i64, n_lambda: usize },

    #[error("minimality violated: F + G is singular at lambda = {lambda:.6} (grid index {index})")]
    MinimalityViolation { lambda: f64, index: usize },

    #[error("operator B is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("density is rank deficient at lambda = {lambda:.6} (min eigenvalue {min_eigenvalue:.3e})")]
    RankDeficient { lambda: f64, min_eigenvalue: f64 },

    #[error("spectral factorization did not converge after {iterations} iterations (residual {residual:.3e})")]
    FactorizationDiverged { iterations: usize, residual: f64 },

    #[error("inverse factor is singular at lambda = {lambda:.6}")]
    SingularFactor { lambda: f64 },

    #[error("admissible class is infeasible: {0}")]
    Infeasible(String),

    #[error("mode does not match class: {0}")]
    ModeMismatch(String),
}
