//! A desk-scale finite-difference laboratory for semilinear wave equations
//! with variable coefficients in an exterior domain:
//!
//! ```text
//!     u_tt - d_i( a^{ij}(x) u_{x_j} ) + u^5 = 0,      u = 0 on the obstacle.
//! ```
//!
//! The coefficient matrix `A = (a^{ij})` is smooth, symmetric, uniformly
//! elliptic and equal to the identity outside a bounded box. Its inverse is a
//! Riemannian metric `g`; the induced distance field organizes everything
//! downstream: backward light cones, energy fluxes through their mantles, the
//! geometric multiplier identity, and mixed space-time norms.
//!
//! Module map:
//! - [`fields`]: grids, masked scalar/vector/matrix fields, FD stencils,
//!   deterministic reductions, dump/CSV output.
//! - [`metric`]: the coefficient zoo, ellipticity bounds, curvature probes.
//! - [`geodesic`]: anisotropic eikonal distance (Lax-Friedrichs fast
//!   sweeping), derived first/second-order fields, comparison-theorem checks,
//!   a graph shortest-path oracle.
//! - [`wave`]: leapfrog time stepping with Dirichlet masking, CFL policy,
//!   boundary traces.
//! - [`energy`]: total/cone energies, mantle fluxes (two independent routes),
//!   trace accumulation, the run ledger.
//! - [`multiplier`]: the Q/P/R multiplier identity, its calculus lemmas, and
//!   the cone-localized budget.
//! - [`norms`]: mixed space-time norms, admissible pairs, the bootstrap
//!   (continuity) check.
//! - [`scenario`]: run configuration, built-in scenarios, the driver.

pub mod error;
pub mod mat3;

pub mod fields;
pub mod metric;

pub mod geodesic;

pub mod energy;
pub mod multiplier;
pub mod norms;
pub mod wave;

pub mod scenario;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
