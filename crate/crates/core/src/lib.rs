//! Numerical laboratory for Schrödinger cocycles over the doubling map.
//!
//! The crate is organised bottom-up:
//!
//! * [`phase`]: exact dyadic phases, so that `x -> 2x mod 1` never loses bits.
//! * [`potential`]: monotone and trigonometric potential families.
//! * [`cocycle`]: 2x2 matrices, the Schrödinger cocycle and overflow-free products.
//! * [`polar`]: polar decomposition and the large-coupling reduced cocycle.
//! * [`angles`]: the lifted angle recursion, its derivative, critical points,
//!   bad-set measures and singular `log|cos|` integrals.
//! * [`lyapunov`]: Birkhoff, phase-averaged and angle-based exponent estimates.
//! * [`herman`]: exact Laurent-polynomial transfer products for trigonometric
//!   potentials and the subharmonic floor check.
//! * [`experiments`]: the parameter sweeps shared by the CLI and the acceptance suite.
//!
//! The linear-algebra layer is generic over the scalar type (see [`scalar::Real`]
//! and [`herman::Coefficient`]); the aliases below fix the common choices.

pub mod angles;
pub mod cocycle;
pub mod error;
pub mod experiments;
pub mod herman;
pub mod lyapunov;
pub mod phase;
pub mod polar;
pub mod potential;
pub mod quadrature;
pub mod scalar;
pub mod table;

pub use error::{LabError, Result};
pub use scalar::Real;

/// Double-precision 2x2 matrix.
pub type Mat2f = cocycle::Mat2<f64>;
/// Single-precision 2x2 matrix.
pub type Mat2f32 = cocycle::Mat2<f32>;
/// Double-precision direction/log-magnitude vector.
pub type ScaledVecf = cocycle::ScaledVec<f64>;
/// Double-precision polar decomposition.
pub type PolarPartsf = polar::PolarParts<f64>;
/// Laurent transfer matrix with floating-point coefficients.
pub type LaurentMatF64 = herman::LaurentMat<f64>;
/// Laurent transfer matrix with exact rational coefficients.
pub type LaurentMatQ = herman::LaurentMat<num_rational::BigRational>;
/// Laurent transfer matrix with complex coefficients (sine terms).
pub type LaurentMatC = herman::LaurentMat<num_complex::Complex64>;
