//! Functionals evaluated along discrete trajectories.
//!
//! Velocities are cell values of `∂ₜρ`. A velocity `v` with zero integral is
//! represented through its flux `f` at the interior faces, `v = −∂ₓf`, with
//! `f` vanishing at both ends. The metric is `∫ τ f²/ρ` and the energy
//! derivative `∫ f ∂ₓ ln u`, with `ρ` at a face taken as `γ_f` times the
//! logarithmic mean of the neighbouring `u`.

use serde::Serialize;

use crate::asymptotics::{kramers_rate, lemma_l2_limit};
use crate::error::{Error, Result};
use crate::fokker_planck::{step_velocity, DiscreteOperator, Grid, StepView, Trajectory};
use crate::limit_flow::{limit_energy, limit_metric, limit_solution};
use crate::measure::EpsilonContext;

/// Relative tolerance on the total integral of a tangent velocity.
pub const TANGENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Masses {
    pub u_plus: f64,
    pub u_minus: f64,
    pub total: f64,
}

/// `u^± = 2∫ρ` over the two half-lines; the grid has a face at the origin.
pub fn masses(u: &[f64], op: &DiscreteOperator, grid: &Grid) -> Masses {
    let z = grid.zero_cell();
    let left: f64 = (0..z).map(|i| op.mass[i] * u[i]).sum();
    let right: f64 = (z..op.size).map(|i| op.mass[i] * u[i]).sum();
    Masses {
        u_plus: 2.0 * right,
        u_minus: 2.0 * left,
        total: left + right,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalMasses {
    pub j_plus: f64,
    pub j_minus: f64,
    pub j_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalVelocity {
    pub j_plus: f64,
    pub j_minus: f64,
    pub j_bar: f64,
    pub j_bar_abs: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Region {
    Plus,
    Minus,
    Bar,
}

fn region(ctx: &EpsilonContext, x: f64) -> Region {
    if ctx.intervals.j_plus.contains(x) {
        Region::Plus
    } else if ctx.intervals.j_minus.contains(x) {
        Region::Minus
    } else {
        Region::Bar
    }
}

/// `∫ρ` over `J_±` and `J̄`, assigning each cell by its center.
pub fn interval_masses(u: &[f64], op: &DiscreteOperator, grid: &Grid, ctx: &EpsilonContext) -> IntervalMasses {
    let mut m = IntervalMasses { j_plus: 0.0, j_minus: 0.0, j_bar: 0.0 };
    for i in 0..op.size {
        let v = op.mass[i] * u[i];
        match region(ctx, grid.cell_centers[i]) {
            Region::Plus => m.j_plus += v,
            Region::Minus => m.j_minus += v,
            Region::Bar => m.j_bar += v,
        }
    }
    m
}

/// `∫∂ₜρ` over `J_±` and `J̄`, and `∫_{J̄}|∂ₜρ|`.
pub fn interval_velocity(velocity: &[f64], grid: &Grid, ctx: &EpsilonContext) -> IntervalVelocity {
    let mut m = IntervalVelocity { j_plus: 0.0, j_minus: 0.0, j_bar: 0.0, j_bar_abs: 0.0 };
    for (i, v) in velocity.iter().enumerate() {
        let q = v * grid.cell_widths[i];
        match region(ctx, grid.cell_centers[i]) {
            Region::Plus => m.j_plus += q,
            Region::Minus => m.j_minus += q,
            Region::Bar => {
                m.j_bar += q;
                m.j_bar_abs += q.abs();
            }
        }
    }
    m
}

/// `E^ε = ∫γ u ln u − ln Z_ε`.
pub fn energy_epsilon(u: &[f64], op: &DiscreteOperator, ctx: &EpsilonContext) -> Result<f64> {
    if let Some((i, v)) = u.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!("energy needs positive density, got {v} in cell {i}")));
    }
    Ok(entropy(u, op) - ctx.log_partition)
}

fn entropy(u: &[f64], op: &DiscreteOperator) -> f64 {
    op.mass
        .iter()
        .zip(u)
        .map(|(m, u)| if *u == 1.0 || *m == 0.0 { 0.0 } else { m * u * u.ln() })
        .sum()
}

/// Logarithmic mean `(a − b)/(ln a − ln b)`.
#[inline]
pub fn log_mean(a: f64, b: f64) -> f64 {
    let r = b / a - 1.0;
    if r.abs() < 1e-4 {
        // series of r/ln(1+r)
        a * (1.0 + r * (0.5 - r * (1.0 / 12.0 - r / 24.0)))
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

/// Flux `f` at interior faces with `v = −∂ₓf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flux {
    pub faces: Vec<f64>,
    /// `∫v` over the domain; zero for tangent velocities.
    pub total: f64,
}

/// Antiderivative of `−v`, accumulated inward from both ends so that it
/// vanishes exactly at `±L`.
pub fn velocity_flux(velocity: &[f64], grid: &Grid) -> Result<Flux> {
    let n = grid.size;
    if velocity.len() != n {
        return Err(Error::Config(format!("velocity has {} values for {n} cells", velocity.len())));
    }
    let q: Vec<f64> = velocity.iter().zip(&grid.cell_widths).map(|(v, w)| v * w).collect();
    let total: f64 = q.iter().sum();
    let scale: f64 = q.iter().map(|x| x.abs()).sum();
    if total.abs() > TANGENT_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Tangent {
            total,
            tolerance: TANGENT_TOLERANCE * scale,
        });
    }
    let z = grid.zero_cell();
    let mut faces = vec![0.0; n - 1];
    let mut acc = 0.0;
    for j in 0..z {
        acc += q[j];
        faces[j] = -acc;
    }
    acc = 0.0;
    for j in (z..n - 1).rev() {
        acc += q[j + 1];
        faces[j] = acc;
    }
    Ok(Flux { faces, total })
}

/// `∫ τ f²/ρ` with `ρ_f = γ_f · logmean(u)`.
pub fn metric_from_flux(flux: &[f64], u: &[f64], op: &DiscreteOperator) -> f64 {
    let mut s = 0.0;
    for (j, f) in flux.iter().enumerate() {
        if *f != 0.0 {
            let log_rho = op.log_gamma_face[j] + log_mean(u[j], u[j + 1]).ln();
            s += (op.face_spacing[j].ln() + op.log_tau + 2.0 * f.abs().ln() - log_rho).exp();
        }
    }
    s
}

/// `∫ γ|∂ₓu|²/(τ u)` with the same face interpolation.
pub fn metric_from_gradient(u: &[f64], op: &DiscreteOperator) -> f64 {
    let mut s = 0.0;
    for j in 0..op.size - 1 {
        let d = u[j + 1] - u[j];
        if d != 0.0 {
            let lm = log_mean(u[j], u[j + 1]);
            s += (op.log_gamma_face[j] - op.log_tau + 2.0 * d.abs().ln() - op.face_spacing[j].ln() - lm.ln()).exp();
        }
    }
    s
}

/// `DE^ε(ρ)·v = ∫ f ∂ₓ ln u`.
pub fn energy_derivative(flux: &[f64], u: &[f64]) -> f64 {
    flux.iter()
        .enumerate()
        .map(|(j, f)| if *f == 0.0 { 0.0 } else { f * (u[j + 1].ln() - u[j].ln()) })
        .sum()
}

/// Metric of the velocity recorded at a snapshot, by the flux route.
pub fn metric_epsilon_step(velocity: &[f64], u: &[f64], op: &DiscreteOperator, grid: &Grid) -> Result<f64> {
    let f = velocity_flux(velocity, grid)?;
    Ok(metric_from_flux(&f.faces, u, op))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayleighValue {
    /// `∫ ½ g^ε(v, v) + DE^ε·v dt`.
    pub functional: f64,
    pub metric_integral: f64,
    pub de_integral: f64,
    pub per_snapshot_metric: Vec<f64>,
    /// Largest `|∫v|` over the snapshots.
    pub tangent_residual: f64,
}

/// Time-integrated Rayleigh functional on the snapshot grid.
///
/// `velocities[s]` pairs with snapshot `s + 1`; each interval
/// `(t_s, t_{s+1}]` uses the state and velocity at its right end.
pub fn rayleigh_epsilon(traj: &Trajectory, op: &DiscreteOperator, velocities: &[Vec<f64>]) -> Result<RayleighValue> {
    let snaps = &traj.snapshots;
    if velocities.len() + 1 != snaps.len() {
        return Err(Error::Config(format!(
            "{} velocities for {} snapshot intervals",
            velocities.len(),
            snaps.len().saturating_sub(1)
        )));
    }
    let mut out = RayleighValue {
        functional: 0.0,
        metric_integral: 0.0,
        de_integral: 0.0,
        per_snapshot_metric: Vec::with_capacity(velocities.len()),
        tangent_residual: 0.0,
    };
    for (s, v) in velocities.iter().enumerate() {
        let dt = snaps[s + 1].field.time - snaps[s].field.time;
        let u = &snaps[s + 1].field.values;
        let f = velocity_flux(v, &traj.grid)?;
        let g = metric_from_flux(&f.faces, u, op);
        let de = energy_derivative(&f.faces, u);
        out.tangent_residual = out.tangent_residual.max(f.total.abs());
        out.metric_integral += dt * g;
        out.de_integral += dt * de;
        out.functional += dt * (0.5 * g + de);
        out.per_snapshot_metric.push(g);
    }
    Ok(out)
}

/// Recorded `∂ₜρ` at every snapshot after the first.
pub fn recorded_velocities(traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    traj.snapshots[1..]
        .iter()
        .map(|s| {
            s.velocity
                .clone()
                .ok_or_else(|| Error::Config(format!("snapshot at t = {} has no velocity", s.field.time)))
        })
        .collect()
}

/// Antiderivative of the normalised bump `cos²(πy/2a)/a` on `(−a, a)`.
fn bump_cdf(y: f64, a: f64) -> f64 {
    if y <= -a {
        0.0
    } else if y >= a {
        1.0
    } else {
        (y + a) / (2.0 * a) + (std::f64::consts::PI * y / a).sin() / (2.0 * std::f64::consts::PI)
    }
}

/// Cell averages of `½v(ψ(x−1) − ψ(x+1))` with `ψ` the cosine² bump of
/// half-width `ε^α`; its flux is `½v` between the bumps.
pub fn recovery_velocity(ctx: &EpsilonContext, grid: &Grid, v: f64) -> Result<Vec<f64>> {
    let a = ctx.intervals.width;
    if a >= 1.0 || 1.0 + a >= grid.half_width() {
        return Err(Error::Config(format!(
            "recovery bumps of half-width {a} collide with each other or the boundary"
        )));
    }
    let faces = &grid.face_positions;
    Ok((0..grid.size)
        .map(|i| {
            let (l, r) = (faces[i], faces[i + 1]);
            let mass = (bump_cdf(r - 1.0, a) - bump_cdf(l - 1.0, a)) - (bump_cdf(r + 1.0, a) - bump_cdf(l + 1.0, a));
            0.5 * v * mass / grid.cell_widths[i]
        })
        .collect())
}

/// `g^ε(v_ε, v_ε)` of the recovery velocity at state `u`, against `g_{u⁺}(v, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryCheck {
    pub time: f64,
    pub u_plus: f64,
    pub metric_eps: f64,
    pub metric_limit: f64,
}

impl RecoveryCheck {
    pub fn relative_deviation(&self) -> f64 {
        (self.metric_eps / self.metric_limit - 1.0).abs()
    }
}

pub fn recovery_metric(
    ctx: &EpsilonContext,
    op: &DiscreteOperator,
    grid: &Grid,
    u: &[f64],
    time: f64,
    v: f64,
) -> Result<RecoveryCheck> {
    let k = kramers_rate(&ctx.potential)?.k;
    let vel = recovery_velocity(ctx, grid, v)?;
    let f = velocity_flux(&vel, grid)?;
    let up = masses(u, op, grid).u_plus;
    Ok(RecoveryCheck {
        time,
        u_plus: up,
        metric_eps: metric_from_flux(&f.faces, u, op),
        metric_limit: limit_metric(k, up, v)?,
    })
}

/// Which `u(t)` the approximant `ũ = 1 + (u(t) − 1)η` is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerReference {
    /// `u⁺_ε(t)` from the solution's own masses.
    Masses,
    /// The limit ODE solution.
    Limit,
}

/// Per-grid data for the layer error: the discrete `η` and the cells of
/// `I_±` and `J⁰`.
#[derive(Debug, Clone)]
pub struct LayerProbe {
    eta: Vec<f64>,
    in_i: Vec<usize>,
    in_j0: Vec<usize>,
}

impl LayerProbe {
    pub fn new(ctx: &EpsilonContext, op: &DiscreteOperator, grid: &Grid) -> Result<Self> {
        let eta = op.transition_layer(grid)?;
        let in_i: Vec<usize> = (0..grid.size).filter(|&i| ctx.intervals.in_i(grid.cell_centers[i])).collect();
        let in_j0: Vec<usize> = (0..grid.size)
            .filter(|&i| ctx.intervals.j_zero.contains(grid.cell_centers[i]))
            .collect();
        if in_i.is_empty() || in_j0.is_empty() {
            return Err(Error::Config("grid has no cells in I_± or J⁰".into()));
        }
        if in_i.iter().chain(&in_j0).any(|&i| !eta[i].is_finite()) {
            return Err(Error::Numerical("transition layer overflows inside I_±".into()));
        }
        Ok(Self { eta, in_i, in_j0 })
    }

    /// `(sup_{I±}|u − ũ|, sup_{J⁰}|u − ũ|²)` for reference value `u_ref`.
    pub fn errors(&self, u: &[f64], u_ref: f64) -> (f64, f64) {
        let dev = |i: usize| (u[i] - 1.0 - (u_ref - 1.0) * self.eta[i]).abs();
        let sup_i = self.in_i.iter().map(|&i| dev(i)).fold(0.0, f64::max);
        let sup_j0 = self.in_j0.iter().map(|&i| dev(i)).fold(0.0, f64::max);
        (sup_i, sup_j0 * sup_j0)
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerError {
    pub sup_i: f64,
    pub l2t_j0: f64,
}

/// Layer errors on the snapshot grid, with a right-endpoint rule in time.
pub fn layer_error(
    traj: &Trajectory,
    ctx: &EpsilonContext,
    op: &DiscreteOperator,
    reference: LayerReference,
    u0: f64,
) -> Result<LayerError> {
    let probe = LayerProbe::new(ctx, op, &traj.grid)?;
    let k = kramers_rate(&ctx.potential)?.k;
    let mut out = LayerError { sup_i: 0.0, l2t_j0: 0.0 };
    for w in traj.snapshots.windows(2) {
        let s = &w[1];
        let u_ref = match reference {
            LayerReference::Masses => masses(&s.field.values, op, &traj.grid).u_plus,
            LayerReference::Limit => limit_solution(u0, k, s.field.time)?,
        };
        let (sup_i, sq) = probe.errors(&s.field.values, u_ref);
        out.sup_i = out.sup_i.max(sup_i);
        out.l2t_j0 += (s.field.time - w[0].field.time) * sq;
    }
    Ok(out)
}

/// Defects of the two discrete energy identities over one implicit step.
///
/// `apriori1 = |u⁺|² + (2dt/τ)D(u⁺) − |u|²` and
/// `apriori2 = D(u⁺)/(2τ) + |δ|²/dt − D(u)/(2τ)`, norms weighted by `γ`;
/// both vanish as `dt → 0`.
pub fn apriori_residuals(op: &DiscreteOperator, before: &[f64], after: &[f64], increment: &[f64], dt: f64) -> (f64, f64) {
    let n = op.size;
    let mut l2_change = 0.0;
    let mut inc_sq = 0.0;
    for i in 0..n {
        let m = op.mass[i];
        l2_change += m * increment[i] * (after[i] + before[i]);
        inc_sq += m * increment[i] * increment[i];
    }
    let mut d_after = 0.0;
    let mut d_change = 0.0;
    for j in 0..n - 1 {
        let a = after[j + 1] - after[j];
        let b = before[j + 1] - before[j];
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let w = (op.log_gamma_face[j] - op.log_tau - op.face_spacing[j].ln()).exp();
        d_after += w * a * a;
        d_change += w * (a - b) * (a + b);
    }
    let r1 = l2_change + 2.0 * dt * d_after;
    let r2 = 0.5 * d_change + inc_sq / dt;
    (r1, r2)
}

/// One row of the per-step diagnostic log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    pub energy: f64,
    pub metric: f64,
    pub apriori1: f64,
    pub apriori2: f64,
    /// Instantaneous `sup_{I±}|u − ũ|`.
    pub layer_sup_i: f64,
    /// Running `∫₀ᵗ sup_{J⁰}|u − ũ|² ds`.
    pub layer_j0: f64,
}

/// Totals accumulated over every solver step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTotals {
    pub steps: usize,
    pub metric_integral: f64,
    pub de_integral: f64,
    pub limit_metric_integral: f64,
    pub limit_de_integral: f64,
    pub tracking_error: f64,
    pub layer_sup_i: f64,
    pub layer_l2t_j0: f64,
    pub max_apriori1: f64,
    pub max_apriori2: f64,
    /// Largest single-step increase of `E^ε` (zero when monotone).
    pub max_energy_increase: f64,
    pub max_mass_drift: f64,
    pub max_metric_route_mismatch: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
}

/// Observer that evaluates every diagnostic after each solver step.
pub struct StepMonitor<'a> {
    ctx: &'a EpsilonContext,
    op: &'a DiscreteOperator,
    grid: &'a Grid,
    probe: LayerProbe,
    reference: LayerReference,
    u0: f64,
    k: f64,
    initial_mass: f64,
    energy: f64,
    pub rows: Vec<DiagnosticRow>,
    pub totals: StepTotals,
}

impl<'a> StepMonitor<'a> {
    pub fn new(
        ctx: &'a EpsilonContext,
        op: &'a DiscreteOperator,
        grid: &'a Grid,
        initial: &[f64],
        u0: f64,
        reference: LayerReference,
    ) -> Result<Self> {
        let k = kramers_rate(&ctx.potential)?.k;
        let probe = LayerProbe::new(ctx, op, grid)?;
        let energy = energy_epsilon(initial, op, ctx)?;
        let m = masses(initial, op, grid);
        let u_ref = match reference {
            LayerReference::Masses => m.u_plus,
            LayerReference::Limit => u0,
        };
        let (sup_i, _) = probe.errors(initial, u_ref);
        let row = DiagnosticRow {
            t: 0.0,
            u_plus: m.u_plus,
            u_minus: m.u_minus,
            energy,
            metric: metric_from_gradient(initial, op),
            apriori1: 0.0,
            apriori2: 0.0,
            layer_sup_i: sup_i,
            layer_j0: 0.0,
        };
        Ok(Self {
            ctx,
            op,
            grid,
            probe,
            reference,
            u0,
            k,
            initial_mass: m.total,
            energy,
            rows: vec![row],
            totals: StepTotals {
                steps: 0,
                metric_integral: 0.0,
                de_integral: 0.0,
                limit_metric_integral: 0.0,
                limit_de_integral: 0.0,
                tracking_error: (m.u_plus - u0).abs(),
                layer_sup_i: 0.0,
                layer_l2t_j0: 0.0,
                max_apriori1: 0.0,
                max_apriori2: 0.0,
                max_energy_increase: 0.0,
                max_mass_drift: 0.0,
                max_metric_route_mismatch: 0.0,
                initial_energy: energy,
                final_energy: energy,
            },
        })
    }

    pub fn observe(&mut self, view: &StepView) -> Result<()> {
        let op = self.op;
        let u = view.after;
        let dt = view.dt;
        let tot = &mut self.totals;
        tot.steps += 1;

        let m = masses(u, op, self.grid);
        tot.max_mass_drift = tot.max_mass_drift.max((m.total - self.initial_mass).abs());
        let lim = limit_solution(self.u0, self.k, view.time)?;
        tot.tracking_error = tot.tracking_error.max((m.u_plus - lim).abs());

        let energy = energy_epsilon(u, op, self.ctx)?;
        tot.max_energy_increase = tot.max_energy_increase.max(energy - self.energy);
        self.energy = energy;
        tot.final_energy = energy;

        let velocity = step_velocity(op, view.increment, dt);
        let flux = velocity_flux(&velocity, self.grid)?;
        let g = metric_from_gradient(u, op);
        let g_flux = metric_from_flux(&flux.faces, u, op);
        if g > 0.0 {
            tot.max_metric_route_mismatch = tot.max_metric_route_mismatch.max((g_flux / g - 1.0).abs());
        }
        let de = energy_derivative(&flux.faces, u);
        tot.metric_integral += dt * g;
        tot.de_integral += dt * de;

        let (r1, r2) = apriori_residuals(op, view.before, u, view.increment, dt);
        tot.max_apriori1 = tot.max_apriori1.max(r1.abs());
        tot.max_apriori2 = tot.max_apriori2.max(r2.abs());

        let u_ref = match self.reference {
            LayerReference::Masses => m.u_plus,
            LayerReference::Limit => lim,
        };
        let (sup_i, sq) = self.probe.errors(u, u_ref);
        tot.layer_sup_i = tot.layer_sup_i.max(sup_i);
        tot.layer_l2t_j0 += dt * sq;

        if view.snapshot {
            self.rows.push(DiagnosticRow {
                t: view.time,
                u_plus: m.u_plus,
                u_minus: m.u_minus,
                energy,
                metric: g,
                apriori1: r1,
                apriori2: r2,
                layer_sup_i: sup_i,
                layer_j0: tot.layer_l2t_j0,
            });
        }
        Ok(())
    }

    /// Closes the limit integrals `∫g_u(u̇,u̇)` and `∫DE(u)u̇` over `[0, t_end]`.
    pub fn finish(mut self, t_end: f64) -> Result<(Vec<DiagnosticRow>, StepTotals)> {
        let e0 = limit_energy(self.u0)?.energy;
        let e1 = limit_energy(limit_solution(self.u0, self.k, t_end)?)?.energy;
        self.totals.limit_de_integral = e1 - e0;
        self.totals.limit_metric_integral = e0 - e1;
        Ok((self.rows, self.totals))
    }
}

/// `∫_{J⁰} τ/(γ ũ)` on the grid, for comparison with the quadrature value.
pub fn lemma_l2_discrete(ctx: &EpsilonContext, probe: &LayerProbe, op: &DiscreteOperator, grid: &Grid, u: f64) -> Result<(f64, f64)> {
    let k = kramers_rate(&ctx.potential)?.k;
    let eta = probe.eta();
    let s = probe
        .in_j0
        .iter()
        .map(|&i| (op.log_tau - op.log_gamma_cell[i]).exp() * grid.cell_widths[i] / (1.0 + (u - 1.0) * eta[i]))
        .sum();
    Ok((s, lemma_l2_limit(k, u)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::{assemble_operator, build_grid, evolve, initial_condition, GradingSpec, InitialSpec, TimeControls};
    use crate::measure::make_context;
    use crate::potential::Potential;
    use crate::quadrature::QuadratureSettings;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    struct Setup {
        ctx: EpsilonContext,
        grid: Grid,
        op: DiscreteOperator,
    }

    fn setup(eps: f64, n: usize) -> Setup {
        let ctx = make_context(&Potential::quartic(), eps, 0.5, &QuadratureSettings::default()).unwrap();
        let grid = build_grid(3.0, n, GradingSpec::default()).unwrap();
        let op = assemble_operator(&ctx, &grid).unwrap();
        Setup { ctx, grid, op }
    }

    #[test]
    fn equilibrium_masses() {
        let s = setup(0.3, 600);
        let m = masses(&vec![1.0; s.op.size], &s.op, &s.grid);
        assert!((m.u_plus - 1.0).abs() < 1e-8 && (m.u_minus - 1.0).abs() < 1e-8);
        assert!((m.total - 1.0).abs() < 1e-8);
        assert!((m.u_plus - m.u_minus).abs() < 1e-14);
    }

    #[test]
    fn well_prepared_masses_approach_u0() {
        let mut prev = f64::INFINITY;
        for eps in [0.35, 0.3, 0.25] {
            let s = setup(eps, 1200);
            let (f, _) = initial_condition(&s.op, &s.grid, &InitialSpec::WellPrepared { u0: 1.5 }).unwrap();
            let d = (masses(&f.values, &s.op, &s.grid).u_plus - 1.5).abs();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn energy_of_equilibrium() {
        let s = setup(0.3, 400);
        let e = energy_epsilon(&vec![1.0; s.op.size], &s.op, &s.ctx).unwrap();
        assert_eq!(e, -s.ctx.log_partition);
        let mut bad = vec![1.0; s.op.size];
        bad[3] = -1.0;
        assert!(energy_epsilon(&bad, &s.op, &s.ctx).is_err());
    }

    #[test]
    fn energy_excess_approaches_limit_energy() {
        let target = limit_energy(1.5).unwrap().energy;
        let mut prev = f64::INFINITY;
        for eps in [0.35, 0.3, 0.25] {
            let s = setup(eps, 1200);
            let (f, _) = initial_condition(&s.op, &s.grid, &InitialSpec::WellPrepared { u0: 1.5 }).unwrap();
            let excess = energy_epsilon(&f.values, &s.op, &s.ctx).unwrap() + s.ctx.log_partition;
            let d = (excess - target).abs();
            assert!(d < prev, "eps={eps} excess={excess}");
            prev = d;
        }
    }

    #[test]
    fn log_mean_properties() {
        assert_relative_eq!(log_mean(2.0, 1.0), 1.0 / 2f64.ln(), max_relative = 1e-15);
        assert_eq!(log_mean(1.3, 1.3), 1.3);
        let a = log_mean(1.0, 1.0 + 1e-5);
        let b = 1e-5 / (1.0f64 + 1e-5).ln();
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn recovery_velocity_shape() {
        let s = setup(0.25, 1200);
        let v = recovery_velocity(&s.ctx, &s.grid, 1.0).unwrap();
        let total: f64 = v.iter().zip(&s.grid.cell_widths).map(|(a, w)| a * w).sum();
        assert!(total.abs() < 1e-14);
        let f = velocity_flux(&v, &s.grid).unwrap();
        let z = s.grid.zero_cell();
        assert!((f.faces[z - 1] - 0.5).abs() < 1e-14);
        for (j, x) in s.grid.face_positions[1..s.grid.size].iter().enumerate() {
            if x.abs() > 1.0 + s.ctx.intervals.width {
                assert!(f.faces[j].abs() < 1e-14);
            }
            if x.abs() < 1.0 - s.ctx.intervals.width {
                assert!((f.faces[j] - 0.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn recovery_metric_matches_limit() {
        let s = setup(0.25, 1200);
        let r = recovery_metric(&s.ctx, &s.op, &s.grid, &vec![1.0; s.op.size], 0.0, 1.0).unwrap();
        assert!(r.relative_deviation() < 0.1, "{r:?}");
    }

    #[test]
    fn non_tangent_velocity_is_rejected() {
        let s = setup(0.3, 400);
        let v = vec![1.0; s.op.size];
        assert!(matches!(velocity_flux(&v, &s.grid), Err(Error::Tangent { .. })));
    }

    #[test]
    fn metric_routes_agree_and_de_is_minus_metric() {
        let s = setup(0.3, 600);
        let (f, _) = initial_condition(&s.op, &s.grid, &InitialSpec::WellPrepared { u0: 1.5 }).unwrap();
        let controls = TimeControls { dt: 1e-3, ..Default::default() };
        let traj = evolve(&s.ctx, &s.grid, &s.op, &f, 0.05, &controls).unwrap();
        let vel = recorded_velocities(&traj).unwrap();
        for (snap, v) in traj.snapshots[1..].iter().zip(&vel) {
            let u = &snap.field.values;
            let g1 = metric_epsilon_step(v, u, &s.op, &s.grid).unwrap();
            let g2 = metric_from_gradient(u, &s.op);
            assert!((g1 / g2 - 1.0).abs() < 1e-8, "{g1} {g2}");
            let de = energy_derivative(&velocity_flux(v, &s.grid).unwrap().faces, u);
            assert!((de + g1).abs() < 1e-8 * g1);
        }
        let r = rayleigh_epsilon(&traj, &s.op, &vel).unwrap();
        assert!((r.functional + 0.5 * r.metric_integral).abs() < 1e-8 * r.metric_integral);
        let zero: Vec<Vec<f64>> = vel.iter().map(|v| vec![0.0; v.len()]).collect();
        assert_eq!(rayleigh_epsilon(&traj, &s.op, &zero).unwrap().functional, 0.0);
    }

    #[test]
    fn interval_velocity_sums_to_zero() {
        let s = setup(0.3, 600);
        let (f, _) = initial_condition(&s.op, &s.grid, &InitialSpec::WellPrepared { u0: 1.5 }).unwrap();
        let controls = TimeControls { dt: 1e-3, ..Default::default() };
        let traj = evolve(&s.ctx, &s.grid, &s.op, &f, 0.02, &controls).unwrap();
        for v in recorded_velocities(&traj).unwrap() {
            let iv = interval_velocity(&v, &s.grid, &s.ctx);
            assert!((iv.j_plus + iv.j_minus + iv.j_bar).abs() < 1e-10);
        }
        let m = interval_masses(&traj.final_field().values, &s.op, &s.grid, &s.ctx);
        let total = masses(&traj.final_field().values, &s.op, &s.grid).total;
        assert!((m.j_plus + m.j_minus + m.j_bar - total).abs() < 1e-14);
    }

    #[test]
    fn stationary_layer_error_vanishes() {
        let s = setup(0.3, 400);
        let f = crate::fokker_planck::Field { time: 0.0, values: vec![1.0; s.op.size] };
        let controls = TimeControls { dt: 1e-2, ..Default::default() };
        let traj = evolve(&s.ctx, &s.grid, &s.op, &f, 0.2, &controls).unwrap();
        let e = layer_error(&traj, &s.ctx, &s.op, LayerReference::Masses, 1.0).unwrap();
        assert!(e.sup_i < 1e-12 && e.l2t_j0 < 1e-24);
        let e = layer_error(&traj, &s.ctx, &s.op, LayerReference::Limit, 1.0).unwrap();
        assert_eq!(e.sup_i, 0.0);
    }

    #[test]
    fn layer_references_differ_by_tracking_error() {
        let s = setup(0.3, 600);
        let (f, _) = initial_condition(&s.op, &s.grid, &InitialSpec::WellPrepared { u0: 1.5 }).unwrap();
        let controls = TimeControls { dt: 1e-3, ..Default::default() };
        let traj = evolve(&s.ctx, &s.grid, &s.op, &f, 0.3, &controls).unwrap();
        let k = kramers_rate(&s.ctx.potential).unwrap().k;
        let tracking = traj
            .snapshots
            .iter()
            .map(|sn| (masses(&sn.field.values, &s.op, &s.grid).u_plus - limit_solution(1.5, k, sn.field.time).unwrap()).abs())
            .fold(0.0, f64::max);
        let a = layer_error(&traj, &s.ctx, &s.op, LayerReference::Masses, 1.5).unwrap();
        let b = layer_error(&traj, &s.ctx, &s.op, LayerReference::Limit, 1.5).unwrap();
        assert!((a.sup_i - b.sup_i).abs() <= tracking * 1.0001);
    }

    #[test]
    fn discrete_l2_integral_tracks_quadrature() {
        let s = setup(0.25, 1200);
        let probe = LayerProbe::new(&s.ctx, &s.op, &s.grid).unwrap();
        let (d, _) = lemma_l2_discrete(&s.ctx, &probe, &s.op, &s.grid, 1.5).unwrap();
        let q = crate::asymptotics::lemma_l2_integral(&s.ctx, 1.5).unwrap().finite_eps_value;
        assert!((d / q - 1.0).abs() < 1e-3, "{d} {q}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn metric_is_nonnegative_and_quadratic(seed in 0u64..10_000, scale in 0.1f64..3.0) {
            use rand::{Rng, SeedableRng};
            let s = setup(0.3, 200);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..s.op.size).map(|_| rng.random_range(0.5..1.5)).collect();
            let flux: Vec<f64> = s.grid.face_positions[1..s.grid.size]
                .iter()
                .map(|x| if x.abs() < 1.5 { rng.random_range(-1.0..1.0) } else { 0.0 })
                .collect();
            let g = metric_from_flux(&flux, &u, &s.op);
            prop_assert!(g >= 0.0);
            let scaled: Vec<f64> = flux.iter().map(|f| f * scale).collect();
            let g2 = metric_from_flux(&scaled, &u, &s.op);
            prop_assert!((g2 / (scale * scale * g) - 1.0).abs() < 1e-12);
            let de = energy_derivative(&flux, &u);
            prop_assert!((energy_derivative(&scaled, &u) - scale * de).abs() < 1e-12 * de.abs().max(1.0));
        }
    }
}
