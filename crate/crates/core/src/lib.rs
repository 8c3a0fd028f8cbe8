//! Bayesian information-theoretic sequential design for hierarchical
//! Gaussian-process surrogates, with a vapour-liquid equilibrium case study.

pub mod design;
pub mod distillation;
pub mod entropy;
pub mod error;
pub mod gp;
pub mod inference;
pub mod kernels;
pub mod mixture;
pub mod seeding;
pub mod vle;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
