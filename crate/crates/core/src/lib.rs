//! Fuchsian systems on the punctured Riemann sphere.
//!
//! This crate models rank-`r` logarithmic connections `d + Σ A_i dz/(z - t_i)`
//! on the trivial-bundle chart of the sphere, together with the structure that
//! makes them *parabolic*: local exponent data, full flags at the punctures
//! compatible with the residues, and rational stability weights.  On top of
//! that it provides
//!
//! - the elementary-transform calculus (flag-level modifications, eigenvalue
//!   regrouping, line-bundle twists) with exact exponent bookkeeping,
//! - the monodromy representation computed by adaptive parallel transport
//!   around keyhole loops, with the local Riemann-Hilbert comparison,
//! - the Schlesinger isomonodromic flow over paths in the puncture
//!   configuration space, with conservation and isomonodromy certification.
//!
//! Floating-point linear algebra is delegated to [`nalgebra`]; exponent and
//! weight arithmetic is exact (Gaussian rationals) whenever the inputs are.

pub mod error;
pub mod exact;
pub mod flag;
pub mod integrate;
pub mod matrix;
pub mod monodromy;
pub mod parabolic;
pub mod schlesinger;
pub mod sphere;
pub mod transforms;

pub use error::Error;
pub use exact::{GaussRational, Rational, Scalar};
pub use flag::Flag;
pub use matrix::{CMat, CVec, C64};
pub use sphere::MarkedSphere;

/// Single global default for approximate comparisons, relative to Frobenius
/// norms.  Every operation that uses it accepts a per-call override and
/// reports the value actually used.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Result alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;
