//! Numerical verification of spectral Hessian bounds for Brenier maps.
//!
//! Given log-concave probability measures `dμ = e^{-V}dx` and `dν = e^{-W}dx`
//! with `W` convex, the Brenier map `T = ∇φ` transporting μ to ν satisfies
//!
//! ```text
//! ‖f(∇²φ)‖_∞ ≤ √(Λ_V / λ_W)
//! ```
//!
//! for every *good* spectral function `f` (convex, positively homogeneous,
//! increasing on the PSD cone) whenever `f(∇²V) ≤ Λ_V` and
//! `f(∇²W*) ≤ 1/λ_W`. This crate builds everything needed to check that
//! inequality on concrete desk-scale problems:
//!
//! - [`symcalc`]: symmetric-matrix calculus — good-function evaluation,
//!   goodness probes, subdifferentials, the positive-definite subgradient
//!   construction, and the Frobenius Cauchy–Schwarz inequality.
//! - [`conjugate`]: discrete Legendre–Fenchel transforms and the Hessian
//!   duality `∇²W*(∇W(x)) = ∇²W(x)⁻¹`.
//! - [`transport`]: Brenier maps via 1D quantile coupling and entropic
//!   regularization in 2D/3D, plus Monge–Ampère residual diagnostics.
//! - [`increments`]: the spherical incremental operator `Δ_ε`, its limit and
//!   upper-bound properties, and the far-field decay probe.
//! - [`mollify`]: the approximation pipeline — mollified potentials
//!   `V_t = -log(e^{-V} ∗ η_t)`, truncated-and-mollified targets, and the
//!   estimate-preservation checks.
//! - [`verify`]: the problem registry, constant estimation, end-to-end bound
//!   reports, the anisotropic reduction, and suite execution.

pub mod config;
pub mod conjugate;
pub mod error;
pub mod grid;
pub mod increments;
pub mod mollify;
pub mod potential;
pub mod rng;
pub mod symcalc;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridField, GridSpec};
pub use potential::{Perturbation, PotentialForm, PotentialSpec};
pub use symcalc::{GoodFunctionSpec, GoodKind, Subgradient, SymMatrix};
