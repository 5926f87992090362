//! Numerical laboratory for the radial combined-power nonlinear Schrödinger
//! equation
//!
//! ```text
//! i u_t + Δu = λ₁|u|^{p₁}u + λ₂|u|^{p₂}u,   u(0) = φ,   x ∈ ℝᴺ, N ≥ 3,
//! ```
//!
//! together with its pseudoconformal (lens) transform, ground-state and
//! sharp Gagliardo–Nirenberg machinery, regime classification and the
//! diagnostics that check scattering, decay and non-scattering predictions.

pub mod error;
pub mod radial_field;
pub mod propagators;
pub mod pseudoconformal;
pub mod ground_state;
pub mod criteria;
pub mod diagnostics;
pub mod lab;

mod interp;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use radial_field::{ModelParams, RadialField, RadialGrid};
