//! Finite-volume solver for `τ_ε γ_ε ∂ₜu = ∂ₓ(γ_ε ∂ₓu)` on a truncated
//! domain with reflecting ends.

mod evolve;
mod grid;
mod operator;
mod tridiag;

pub use evolve::{
    evolve, evolve_with, initial_condition, step, step_velocity, Field, InitialReport, InitialSpec, Snapshot,
    StepView, TimeControls, Trajectory,
};
pub use grid::{build_grid, GradingSpec, Grid};
pub use operator::{assemble_operator, DiscreteOperator};
pub use tridiag::solve_tridiagonal;
