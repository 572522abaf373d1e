//! One error enum for the whole crate. Numerical failures carry enough
//! context (node index, residual, step) to locate the offending state.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),

    #[error("node {node}: matrix is not symmetric (max asymmetry {asym:.3e})")]
    NotSymmetric { node: usize, asym: f64 },

    #[error("node {node}: matrix is not positive definite (min eigenvalue {eig:.3e})")]
    NotPositiveDefinite { node: usize, eig: f64 },

    #[error("region touches masked or edge nodes at node {node}; stencil unavailable")]
    InsufficientStencil { node: usize },

    #[error("eikonal sweep failed to converge: residual {residual:.3e} after {iters} iterations")]
    EikonalNoConverge { residual: f64, iters: usize },

    #[error("source point {0:?} lies outside the grid interior")]
    SourceOutsideGrid([f64; 3]),

    #[error("empty region/shell for {what} (parameter {param:.3e})")]
    EmptyRegion { what: &'static str, param: f64 },

    #[error("time step {dt:.3e} violates the CFL bound {dt_max:.3e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("non-finite value detected in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("initial data does not vanish within {margin} cells of masked/edge nodes (node {node})")]
    InitialDataSupport { node: usize, margin: usize },

    #[error("operation requires an obstacle but the scenario has none")]
    NoObstacle,

    #[error("support escaped the causal ball at step {step}: reached {distance:.3e}, allowed {allowed:.3e}")]
    SupportEscape { step: usize, distance: f64, allowed: f64 },

    #[error("no closed-form forcing available: {0}")]
    ForcingUnavailable(&'static str),

    #[error("requested time {t:.3e} outside the recorded series [{lo:.3e}, {hi:.3e}]")]
    TimeOutsideSeries { t: f64, lo: f64, hi: f64 },

    #[error("exponent q = {q} must be >= 6 for an admissible pair")]
    BadExponent { q: f64 },

    #[error("denominator data/forcing identically zero; ratio undefined")]
    ZeroData,

    #[error("smallness precondition violated: eps = {eps:.3e} >= 2^-gamma C0^(1-gamma) = {limit:.3e}")]
    EpsilonTooLarge { eps: f64, limit: f64 },

    #[error("series must start at zero, got y(a) = {y0:.3e}")]
    SeriesStartNonzero { y0: f64 },

    #[error("curvature scale too large: a*rho_max = {product:.3e} >= pi/2")]
    CurvatureScaleTooLarge { product: f64 },

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("config missing required section [{0}]")]
    MissingSection(&'static str),

    #[error("config missing required key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },

    #[error("unknown scenario `{0}`; run `list` for the built-ins")]
    UnknownScenario(String),

    #[error("cone section at t = {t:.3e} exceeds the valid distance range (need rho <= {need:.3e}, valid to {have:.3e})")]
    ConeOutsideValid { t: f64, need: f64, have: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
