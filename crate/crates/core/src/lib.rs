//! Upper and lower bounds on regularized relative entropies between
//! SDP-representable sets of quantum states.
//!
//! The crate computes sandwich estimates `D_M(A_m‖B_m)/m ≤ D^∞(A‖B) ≤ D(A_m‖B_m)/m`
//! by quantum-relative-entropy conic programming, with optional permutation-symmetry
//! block reduction of the level-`m` programs, and ships the four application suites
//! built on top of it (channel discrimination, entanglement cost, entanglement
//! distillation, magic distillation).
//!
//! Module map:
//! - [`linalg`]: dense complex Hermitian operators, tensor structure, matrix functions;
//! - [`divergences`]: Umegaki / min / max / measured relative entropies;
//! - [`sets`]: SDP-representable sets (Rains, PPT_k, PPT, Wigner polytope relaxation,
//!   channel images, singletons), support functions and polar membership;
//! - [`conic`]: the conic-program model and interior-point solver, plus the
//!   relative-entropy program builders;
//! - [`symmetry`]: partitions, commutant block diagonalization, twirling, and
//!   reduction of symmetric set representations;
//! - [`estimators`]: the level-`m` sandwich estimator with its gap certificate;
//! - [`apps`]: channels, state families, analytic references, and the named bounds.

pub mod apps;
pub mod conic;
pub mod divergences;
pub mod estimators;
pub mod linalg;
pub mod sets;
pub mod symmetry;

mod error;

pub use error::{Error, Result};

/// Natural log of 2; conversions between nats and bits happen at module boundaries.
pub(crate) const LN_2: f64 = std::f64::consts::LN_2;

/// Base-two logarithm used for every reported entropy quantity.
#[inline]
pub fn log2(x: f64) -> f64 {
    x.log2()
}
