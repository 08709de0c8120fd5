//! Numerical workbench for epsilon-net generalized numbers and functions.
//!
//! A generalized number is a family of doubles indexed by a fixed grid of
//! epsilon samples; a generalized function is a closed-form representative
//! evaluated pointwise along that grid.  The crate provides:
//!
//! * an expression language with exact symbolic differentiation ([`expr`]),
//! * asymptotic classification of nets (null / invertible / moderate) and the
//!   sharp-topology geometry built on it ([`gennum`]),
//! * representatives of generalized functions and pointed evaluation
//!   ([`genfun`]),
//! * membranes (nets of integration regions), histories (nets of curves) and
//!   null perturbations between them ([`membrane`]),
//! * quadrature over membranes and along histories, with gap classification
//!   for pairs of results that should agree ([`quad`]),
//! * contour machinery: Cauchy evaluation, Taylor coefficients from contour
//!   moments, and series evaluation ([`holo`]),
//! * closed-form transport and wave solutions with residual verification
//!   ([`pde`]).

pub mod error;
pub mod expr;
pub mod genfun;
pub mod gennum;
pub mod grid;
pub mod holo;
pub mod membrane;
pub mod pde;
pub mod quad;
pub mod value;

pub use error::Error;
pub use value::Value;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
