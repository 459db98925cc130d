//! Numerical laboratory for input-to-state stability of bilinear control
//! systems `x' = Ax + B1 F(x, u1) + B2 u2`.
//!
//! The crate is organised bottom-up:
//!
//! - [`signals`]: piecewise-constant vector-valued input signals.
//! - [`orlicz`]: Young functions and Luxemburg (Orlicz) norms of signals.
//! - [`bounds`]: the comparison functions of the bilinear ISS estimate and
//!   trajectory audits against them.
//! - [`mild_solver`]: Picard iteration of the variation-of-constants
//!   formula on finite-dimensional truncations.
//! - [`diagonal`]: the diagonal system `x_n' = λ_n x_n + u μ_n x_n` with
//!   closed-form oracle and admissibility constants.
//! - [`fokker_planck`]: a conservative 1-D Fokker–Planck discretisation
//!   with bilinear potential control.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod diagonal;
pub mod error;
pub mod fokker_planck;
pub mod mild_solver;
pub mod orlicz;
pub mod rng;
pub mod signals;

pub use error::{IssError, Result};

pub use orlicz::{Interval, YoungFunction};
pub use signals::Signal;

/// Crate version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Euclidean norm of a slice.
pub fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Formats a float with 17 significant digits, which round-trips exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
