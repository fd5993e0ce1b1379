use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("holes overlap: hole diameter {hole_diameter} m must be smaller than pitch {hole_pitch} m")]
    HoleOverlap { hole_diameter: f64, hole_pitch: f64 },

    #[error("invalid dimension `{name}` = {value}: must be strictly positive and finite")]
    InvalidDimension { name: &'static str, value: f64 },

    #[error("lattice must have at least one site per side, got {0}x{1}")]
    EmptyLattice(usize, usize),

    #[error("grid spacing {spacing} m is too coarse; at most {max} m resolves each hole with 8 nodes")]
    Resolution { spacing: f64, max: f64 },

    #[error("domain margin {margin} m is below the minimum of {min} m")]
    MarginTooSmall { margin: f64, min: f64 },

    #[error("grid would need {nodes} nodes, above the configured cap of {cap}")]
    TooManyNodes { nodes: usize, cap: usize },

    #[error("boundary grid has no Dirichlet node on the {0} z face")]
    MissingZBoundary(&'static str),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}, tolerance {tol:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("field extent {extent} along axis {axis} is too small (need at least {min})")]
    DegenerateExtent { axis: usize, extent: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("top-plate bias is non-zero but z1 has not been fitted")]
    MissingZ1,

    #[error("site ({0}, {1}) is outside the lattice")]
    SiteOutOfRange(usize, usize),

    #[error("no pseudopotential minimum above site: {0}")]
    NoMinimum(String),

    #[error("trap is unbounded: the minimum connects to the domain boundary at its own level")]
    Unbounded,

    #[error("fit is rank deficient: {0}")]
    RankDeficient(String),

    #[error("fit did not converge after {iterations} iterations (cost trace: {trace:?})")]
    FitNotConverged { iterations: usize, trace: Vec<f64> },

    #[error("no stability transition found for q in (0, {q_max})")]
    BracketFailure { q_max: f64 },

    #[error("anti-trapping: omega_z^2 bracket is {bracket} <= 0")]
    AntiTrapping { bracket: f64 },

    #[error("time step {dt:e} s exceeds the limit {max:e} s (2 pi / (50 Omega))")]
    StepSize { dt: f64, max: f64 },

    #[error("spectrum has no secular peak: {0}")]
    NoPeak(String),

    #[error("small-displacement regime violated: x1/d = {ratio:.3} > {limit}")]
    Regime { ratio: f64, limit: f64 },

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:e})")]
    EquilibriumNotConverged { iterations: usize, residual: f64 },

    #[error("ions {0} and {1} collapsed into one well")]
    Merge(usize, usize),

    #[error("degenerate fit data: {0}")]
    DegenerateData(String),

    #[error("infeasible scaling constraint: {0}")]
    Infeasible(String),

    #[error("field file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
