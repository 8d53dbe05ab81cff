//! Numerical laboratory for the time-dependent supersymmetric two-level
//! k-photon Jaynes-Cummings model.
//!
//! The model Hamiltonian
//!
//! ```text
//! H(t) = ω(t) a†a + ω₀(t)/2 σz + g(t) (a†)^k σ₋ + g*(t) a^k σ₊
//! ```
//!
//! conserves `N′ = diag(a^k (a†)^k, (a†)^k a^k)`, so its dynamics split into
//! two-dimensional blocks `span{|m⟩⊗e, |m+k⟩⊗g}`. Inside each block a
//! Lewis-Riesenfeld invariant parameterised by two angles `(θ, φ)` yields
//! exact solutions carrying a dynamical and a geometric phase.
//!
//! Module map:
//!
//! * [`algebra`] builds the truncated operators and checks the superalgebra.
//! * [`subspace`] projects onto the conserved two-dimensional blocks.
//! * [`params`] evaluates the time-dependent profiles `ω`, `ω₀`, `g`.
//! * [`aux`] integrates the auxiliary equations for `(θ, φ)`.
//! * [`propagator`] assembles the unitary transformation, phases and exact states.
//! * [`oracle`] propagates the Schrödinger equation by brute force.
//! * [`adiabatic`] covers the adiabatic limit and the Berry phase.
//! * [`coherent`] builds time-dependent coherent states.
//! * [`export`] writes the CSV artifacts.

// `!(x < tol)` is used on purpose so that NaN fails every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod algebra;
pub mod aux;
pub mod coherent;
mod error;
pub mod export;
pub mod ode;
pub mod oracle;
pub mod params;
pub mod propagator;
pub mod subspace;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
