use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::DiscreteOperator;
use crate::error::{Error, Result};
use crate::measure::EpsilonContext;

/// Relative density `u = ρ/γ` at the cell centers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// `1 + (u₀ − 1) η`, with the discrete layer clamped to `[-1, 1]`.
    WellPrepared { u0: f64 },
    Custom(Vec<f64>),
}

/// Bounds the initial data is required to satisfy uniformly in ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialReport {
    pub min_u: f64,
    pub max_u: f64,
    /// `Σ γ_i w_i u_i²`.
    pub weighted_l2: f64,
    /// `τ⁻¹ Σ γ_f (Δu)²/h_f`.
    pub weighted_gradient: f64,
    pub mass: f64,
}

pub fn initial_condition(op: &DiscreteOperator, grid: &Grid, spec: &InitialSpec) -> Result<(Field, InitialReport)> {
    let values = match spec {
        InitialSpec::WellPrepared { u0 } => {
            if !(*u0 > 0.0 && *u0 < 2.0) {
                return Err(Error::Domain(format!("initial mass coordinate u0 = {u0} lies outside (0, 2)")));
            }
            if *u0 == 1.0 {
                vec![1.0; op.size]
            } else {
                op.transition_layer(grid)?
                    .iter()
                    .map(|e| 1.0 + (u0 - 1.0) * e.clamp(-1.0, 1.0))
                    .collect()
            }
        }
        InitialSpec::Custom(v) => {
            if v.len() != op.size {
                return Err(Error::Config(format!(
                    "custom initial profile has {} values for {} cells",
                    v.len(),
                    op.size
                )));
            }
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0) || !x.is_finite()) {
                return Err(Error::Domain(format!("initial density must be positive, got {x} in cell {i}")));
            }
            v.clone()
        }
    };
    let report = InitialReport {
        min_u: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_u: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        weighted_l2: op.inner(&values, &values),
        weighted_gradient: op.dirichlet_scaled(&values, -op.log_tau),
        mass: op.total_mass(&values),
    };
    Ok((Field { time: 0.0, values }, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeControls {
    pub dt: f64,
    pub theta: f64,
    /// Snapshots per unit of rescaled time.
    pub snapshot_cadence: f64,
    /// Geometric start-up ramp from `dt·1e-6` with ratio 1.2.
    pub ramp: bool,
}

impl Default for TimeControls {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            theta: 1.0,
            snapshot_cadence: 100.0,
            ramp: true,
        }
    }
}

const RAMP_START: f64 = 1e-6;
const RAMP_RATIO: f64 = 1.2;

impl TimeControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        if !(self.snapshot_cadence > 0.0 && self.snapshot_cadence.is_finite()) {
            return Err(Error::Config(format!(
                "snapshot cadence must be positive, got {}",
                self.snapshot_cadence
            )));
        }
        Ok(())
    }

    /// Step sizes covering `[0, t_end]`.
    pub fn schedule(&self, t_end: f64) -> Vec<f64> {
        let mut steps = Vec::new();
        let mut t = 0.0;
        if self.ramp {
            let mut d = self.dt * RAMP_START;
            while d < self.dt && t + d < t_end {
                steps.push(d);
                t += d;
                d *= RAMP_RATIO;
            }
        }
        let tiny = 1e-12 * t_end.max(1.0);
        while t_end - t > tiny {
            let d = self.dt.min(t_end - t);
            steps.push(d);
            t += d;
        }
        steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub field: Field,
    /// `∂ₜρ` per cell over the step ending at this snapshot.
    pub velocity: Option<Vec<f64>>,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub controls: TimeControls,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub initial_mass: f64,
    pub max_mass_drift: f64,
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
}

impl Trajectory {
    pub fn final_field(&self) -> &Field {
        &self.snapshots.last().expect("trajectory has a snapshot").field
    }
}

/// One solver step, handed to observers.
pub struct StepView<'a> {
    pub index: usize,
    pub time: f64,
    pub dt: f64,
    pub before: &'a [f64],
    pub after: &'a [f64],
    pub increment: &'a [f64],
    /// Whether this step is stored as a snapshot.
    pub snapshot: bool,
}

/// θ-step of a single field.
pub fn step(state: &Field, op: &DiscreteOperator, dt: f64, theta: f64) -> Result<Field> {
    let inc = op.increment(&state.values, dt, theta)?;
    Ok(Field {
        time: state.time + dt,
        values: state.values.iter().zip(&inc).map(|(u, d)| u + d).collect(),
    })
}

/// `∂ₜρ = γ δ/dt` per cell.
pub fn step_velocity(op: &DiscreteOperator, increment: &[f64], dt: f64) -> Vec<f64> {
    increment
        .iter()
        .zip(&op.log_gamma_cell)
        .map(|(d, g)| if *d == 0.0 { 0.0 } else { d * g.exp() / dt })
        .collect()
}

pub fn evolve(
    ctx: &EpsilonContext,
    grid: &Grid,
    op: &DiscreteOperator,
    u0: &Field,
    t_end: f64,
    controls: &TimeControls,
) -> Result<Trajectory> {
    evolve_with(ctx, grid, op, u0, t_end, controls, |_| Ok(()))
}

pub fn evolve_with<F>(
    _ctx: &EpsilonContext,
    grid: &Grid,
    op: &DiscreteOperator,
    u0: &Field,
    t_end: f64,
    controls: &TimeControls,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&StepView) -> Result<()>,
{
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("horizon T must be positive, got {t_end}")));
    }
    controls.validate()?;
    if u0.values.len() != op.size || grid.size != op.size {
        return Err(Error::Config("initial field, grid and operator sizes differ".into()));
    }
    let schedule = controls.schedule(t_end);
    let spacing = 1.0 / controls.snapshot_cadence;
    let mut next_snapshot = spacing;

    let mut u = u0.values.clone();
    let initial_mass = op.total_mass(&u);
    let mut max_drift = 0.0f64;
    let mut t = u0.time;
    let mut snapshots = vec![Snapshot {
        field: u0.clone(),
        velocity: None,
        dt: 0.0,
    }];
    let mut min_u = vec![u.iter().copied().fold(f64::INFINITY, f64::min)];
    let mut max_u = vec![u.iter().copied().fold(f64::NEG_INFINITY, f64::max)];
    let last = schedule.len().saturating_sub(1);

    for (index, &dt) in schedule.iter().enumerate() {
        let inc = op.increment(&u, dt, controls.theta)?;
        let next: Vec<f64> = u.iter().zip(&inc).map(|(a, d)| a + d).collect();
        if let Some((i, v)) = next.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {v} in cell {i} (x = {}) at step {index}, t = {t}, dt = {dt}",
                grid.cell_centers[i]
            )));
        }
        t += dt;
        let is_snapshot = t >= next_snapshot - 1e-9 * spacing || index == last;
        observer(&StepView {
            index,
            time: t,
            dt,
            before: &u,
            after: &next,
            increment: &inc,
            snapshot: is_snapshot,
        })?;
        max_drift = max_drift.max((op.total_mass(&next) - initial_mass).abs());
        if is_snapshot {
            snapshots.push(Snapshot {
                field: Field {
                    time: t,
                    values: next.clone(),
                },
                velocity: Some(step_velocity(op, &inc, dt)),
                dt,
            });
            min_u.push(next.iter().copied().fold(f64::INFINITY, f64::min));
            max_u.push(next.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            while next_snapshot <= t + 1e-9 * spacing {
                next_snapshot += spacing;
            }
        }
        u = next;
    }
    Ok(Trajectory {
        grid: grid.clone(),
        controls: *controls,
        snapshots,
        steps: schedule.len(),
        initial_mass,
        max_mass_drift: max_drift,
        min_u,
        max_u,
    })
}
