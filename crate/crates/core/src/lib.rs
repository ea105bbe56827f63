//! Numerical laboratory for the Kramers–Smoluchowski equation in the
//! limit of high activation energy.
//!
//! The equation `τ_ε ∂ₜρ = ∂ₓ(∂ₓρ + ε⁻² ρ H′)` is solved in relative-density
//! form `u = ρ/γ_ε`, and its solutions are compared against the two-state
//! limit `u̇ = −k(u − 1)`.

pub mod asymptotics;
pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fokker_planck;
pub mod limit_flow;
pub mod measure;
pub mod potential;
pub mod quadrature;

pub use error::{Error, Result};
