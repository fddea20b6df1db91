//! daeh: T-periodic analysis of separated-variables semi-explicit DAEs
//! `ẋ = a(t) f(x, y) + λ h(t, x, y)`, `g(x, y) = 0`,
//! reduced to an ODE on the constraint manifold M = g⁻¹(0). The crate
//! computes Poincaré translation maps and monodromy matrices, locates zeros
//! of F = (f, g) with Brouwer indices and degrees, classifies T-resonance,
//! continues branches of T-periodic orbits in the perturbation parameter λ,
//! and reduces implicit linear-E DAEs to semi-explicit form via SVD.

pub mod error;
pub mod manifold;
pub mod model;
pub mod expr;
pub mod linalg;
pub mod quad;

pub use error::{Error, Result};
