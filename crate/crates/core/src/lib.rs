//! Blind deconvolution of randomly modulated inputs.
//!
//! The unknown filter `h0` is circularly convolved with `N` inputs
//! `r_n ⊙ C x0_n` whose signs `r_n` are known and whose coefficients live in
//! a known subspace `C`. The measurements are bilinear in `(h0, x0)` and
//! linear in the lifted rank-one matrix `h0 x̄0*` (entry `(i, j)` equal to
//! `h0_i x0_j`). Recovery runs a spectral initializer followed by regularized
//! Wirtinger gradient descent.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod objective;
pub mod operator;
pub mod seed;
pub mod signal_model;
pub mod solver;
pub mod spectral;

pub use error::{DeconvError, Result};
pub use num_complex::Complex64;

pub(crate) const C64_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `‖v‖₂²`.
pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨a, b⟩ = b* a`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}
