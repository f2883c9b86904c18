use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("position x = {x} lies outside the solved domain [{min}, {max})")]
    OutOfDomain { x: f64, min: f64, max: f64 },

    #[error("time t = {t} lies outside the solved range [{start}, {end}]")]
    OutOfTimeRange { t: f64, start: f64, end: f64 },

    #[error("node region at x = {x}, t = {t} (rho = {rho:e})")]
    NodeRegion { x: f64, t: f64, rho: f64 },

    #[error("split-step norm drift {drift:e} exceeds tolerance {tolerance:e}")]
    UnstableStep { drift: f64, tolerance: f64 },

    #[error("field sample is not valid (node region)")]
    InvalidField,

    #[error("the Dirac kernel has no pointwise density")]
    DiracDensityRequest,

    #[error("the Dirac kernel has no modified force; use the Bohm law")]
    DiracKernel,

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("momentum flux does not decay in the tail: {0}")]
    TailDivergence(String),

    #[error("trajectory entered a node region at t = {t}")]
    NodeRegionEntered { t: f64 },

    #[error("adaptive step fell below min_dt at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("finite-difference neighbourhood of (x = {x}, p = {p}, t = {t}) is not valid")]
    InvalidNeighborhood { x: f64, p: f64, t: f64 },

    #[error("inverse-CDF sampler grid too coarse: {0}")]
    SamplerGridTooCoarse(String),

    #[error("{truncated} of {total} trajectories were censored at nodes (limit {limit})")]
    TooManyTruncated { truncated: usize, total: usize, limit: f64 },

    #[error("coarse-grained support mismatch: mass {mass:e} lies in cells where f_mu vanishes")]
    SupportMismatch { mass: f64 },

    #[error("cell fields were built on different grids")]
    GridMismatch,

    #[error("coarse grid covers only {covered} of the equilibrium mass")]
    GridCoverage { covered: f64 },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
