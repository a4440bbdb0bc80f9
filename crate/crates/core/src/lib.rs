//! Numerical laboratory for blow-up dynamics of the one-dimensional semilinear
//! wave equation `u_tt = u_xx + |u|^{p-1} u`.
//!
//! The crate solves the equation with an explicit scheme, estimates the blow-up
//! curve `T(x)`, transforms solutions to similarity variables on the weighted
//! interval `(-1,1)`, decomposes the rescaled states into signed sums of
//! generalized solitons by Newton iteration on dual-pairing orthogonality
//! conditions, and measures the asymptotic laws attached to that decomposition:
//! energy level quantization, the logarithmic drift of soliton centers, the
//! corner shape of the blow-up curve near characteristic points, and the
//! blow-up speed inside backward light cones.
//!
//! Module layout mirrors the pipeline:
//! - [`grid`]: Gauss-Jacobi quadrature for the weight `(1-y^2)^{2/(p-1)}`,
//!   barycentric differentiation, the `xi = argtanh(y)` chart.
//! - [`solitons`]: closed-form soliton families and their derivatives.
//! - [`functionals`]: energy-space norms, the dual directions `W_l(d)`
//!   (degenerate elliptic solve), projections, linearized operators.
//! - [`modulation`]: the multi-soliton Newton fitter.
//! - [`wave`]: physical-space solver, blow-up time estimation, similarity
//!   extraction, the center-shift transformation, time schedules.
//! - [`analysis`]: classification and law fits.
//! - [`verify`]: brute-force oracle suite for the closed-form identities.

pub mod analysis;
pub mod config;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod modulation;
pub mod report;
pub mod solitons;
pub mod special;
pub mod verify;
pub mod wave;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
