//! ε sweeps, comparison against the limit ODE, rate fits and verdicts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{kramers_rate, lemma_l0_report, lemma_l2_integral, LemmaL0Report, L0_NAMES};
use crate::diagnostics::{
    interval_masses, masses, rayleigh_epsilon, recorded_velocities, recovery_metric, recovery_velocity,
    DiagnosticRow, IntervalMasses, LayerReference, StepMonitor, StepTotals,
};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    assemble_operator, build_grid, evolve_with, initial_condition, DiscreteOperator, GradingSpec, Grid, InitialReport,
    InitialSpec, TimeControls, Trajectory,
};
use crate::limit_flow::{limit_rayleigh, limit_solution, limit_velocity, TimeQuadrature};
use crate::measure::{make_context_on, EpsilonContext, EPSILON_FLOOR};
use crate::potential::Potential;
use crate::quadrature::QuadratureSettings;

pub const EPSILON_CEILING: f64 = 0.5;
/// Values at or below this count as converged in the monotonicity verdicts.
pub const CONVERGED_FLOOR: f64 = 1e-10;
pub const TRACKING_CAP: f64 = 0.05;
pub const RESIDUAL_CAP: f64 = 1e-6;
pub const MASS_DRIFT_CAP: f64 = 1e-10;
pub const BALANCE_TOLERANCE: f64 = 1e-4;
pub const MINIMALITY_TOLERANCE: f64 = 1e-6;
pub const RECOVERY_TOLERANCE: f64 = 0.1;
/// Relative slack on single-step energy increases, for roundoff.
pub const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub half_width: f64,
    pub n_base: usize,
    pub grading: GradingSpec,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            n_base: 1200,
            grading: GradingSpec::default(),
        }
    }
}

/// Everything shared by the runs of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub potential: Potential,
    pub alpha: f64,
    pub u0: f64,
    /// Cell values of `u` replacing the well-prepared datum.
    pub custom_initial: Option<Vec<f64>>,
    pub t_end: f64,
    pub grid: GridSettings,
    pub controls: TimeControls,
    pub quadrature: QuadratureSettings,
    pub layer_reference: LayerReference,
    pub seed: u64,
    pub competitors: usize,
}

impl RunSettings {
    pub fn new(potential: Potential, u0: f64, t_end: f64) -> Self {
        Self {
            potential,
            alpha: 0.5,
            u0,
            custom_initial: None,
            t_end,
            grid: GridSettings::default(),
            controls: TimeControls::default(),
            quadrature: QuadratureSettings::default(),
            layer_reference: LayerReference::Masses,
            seed: 42,
            competitors: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.u0 > 0.0 && self.u0 < 2.0) {
            return Err(Error::Config(format!("u0 must lie in (0, 2), got {}", self.u0)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("T must be positive, got {}", self.t_end)));
        }
        self.controls.validate()?;
        self.quadrature.validate()?;
        if let Some(v) = &self.custom_initial {
            if v.len() != self.grid.n_base {
                return Err(Error::Config(format!(
                    "custom initial profile has {} values, grid has {} cells",
                    v.len(),
                    self.grid.n_base
                )));
            }
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!("custom initial profile must be positive, got {x} at {i}")));
            }
        }
        Ok(())
    }
}

pub fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::Config("no ε values given".into()));
    }
    for e in epsilons {
        if !(EPSILON_FLOOR..=EPSILON_CEILING).contains(e) {
            return Err(Error::Config(format!(
                "ε = {e} outside [{EPSILON_FLOOR}, {EPSILON_CEILING}]"
            )));
        }
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("ε values must be strictly decreasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayleighReport {
    /// Step-level `∫ ½g^ε + DE^ε·∂ₜρ dt` of the recorded velocity.
    pub eps_functional: f64,
    pub limit_functional: f64,
    /// `g^ε(∂ₜρ, ∂ₜρ)` at each snapshot after the first.
    pub per_step_metric: Vec<f64>,
    /// `J^ε(v) − J^ε(∂ₜρ)` on the snapshot grid.
    pub minimality_gaps: Vec<f64>,
    /// Snapshot-grid functional of the recorded velocity.
    pub snapshot_functional: f64,
    pub snapshot_metric_integral: f64,
    pub tangent_residual: f64,
}

impl RayleighReport {
    /// `|J + ½∫g| / (½∫g)` on the snapshot grid; zero for a stationary run.
    pub fn balance_defect(&self) -> f64 {
        let half = 0.5 * self.snapshot_metric_integral;
        let d = (self.snapshot_functional + half).abs();
        if half == 0.0 {
            d
        } else {
            d / half
        }
    }
}

/// One point of the `t ↦ u⁺` overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlayPoint {
    pub t: f64,
    pub u_plus: f64,
    pub u_limit: f64,
}

pub struct RunOutcome {
    pub epsilon: f64,
    pub ctx: EpsilonContext,
    pub op: DiscreteOperator,
    pub trajectory: Trajectory,
    pub initial: InitialReport,
    pub rows: Vec<DiagnosticRow>,
    pub totals: StepTotals,
    pub rayleigh: RayleighReport,
    pub overlay: Vec<OverlayPoint>,
    pub recovery_deviation: f64,
    pub lemma_l0: LemmaL0Report,
    pub lemma_l2_deviation: f64,
    pub final_intervals: IntervalMasses,
}

pub fn prepare(settings: &RunSettings, epsilon: f64) -> Result<(EpsilonContext, Grid, DiscreteOperator)> {
    let ctx = make_context_on(
        &settings.potential,
        epsilon,
        settings.alpha,
        settings.grid.half_width,
        &settings.quadrature,
    )?;
    let grid = build_grid(settings.grid.half_width, settings.grid.n_base, settings.grid.grading)?;
    let op = assemble_operator(&ctx, &grid)?;
    Ok((ctx, grid, op))
}

/// Evolves one ε and evaluates every diagnostic on the result.
pub fn run_single(settings: &RunSettings, epsilon: f64, stream: u64) -> Result<RunOutcome> {
    settings.validate()?;
    let (ctx, grid, op) = prepare(settings, epsilon)?;
    let spec = match &settings.custom_initial {
        Some(v) => InitialSpec::Custom(v.clone()),
        None => InitialSpec::WellPrepared { u0: settings.u0 },
    };
    let (field, initial) = initial_condition(&op, &grid, &spec)?;
    let u0 = settings.u0;
    let mut monitor = StepMonitor::new(&ctx, &op, &grid, &field.values, u0, settings.layer_reference)?;
    let trajectory = evolve_with(&ctx, &grid, &op, &field, settings.t_end, &settings.controls, |view| {
        monitor.observe(view)
    })?;
    let (rows, totals) = monitor.finish(settings.t_end)?;
    let k = kramers_rate(&ctx.potential)?.k;

    let velocities = recorded_velocities(&trajectory)?;
    let own = rayleigh_epsilon(&trajectory, &op, &velocities)?;
    let gaps = minimality_probe(&trajectory, &ctx, &op, settings.competitors, settings.seed, stream)?;
    let limit_functional = limit_rayleigh(
        k,
        |t| limit_solution(u0, k, t).unwrap_or(f64::NAN),
        |t| limit_velocity(u0, k, t).unwrap_or(f64::NAN),
        settings.t_end,
        &TimeQuadrature::default(),
    )?;
    let rayleigh = RayleighReport {
        eps_functional: 0.5 * totals.metric_integral + totals.de_integral,
        limit_functional,
        per_step_metric: own.per_snapshot_metric.clone(),
        minimality_gaps: gaps,
        snapshot_functional: own.functional,
        snapshot_metric_integral: own.metric_integral,
        tangent_residual: own.tangent_residual,
    };

    let mut overlay = Vec::with_capacity(trajectory.snapshots.len());
    let mut recovery_deviation = 0.0f64;
    for s in &trajectory.snapshots {
        let u = &s.field.values;
        overlay.push(OverlayPoint {
            t: s.field.time,
            u_plus: masses(u, &op, &grid).u_plus,
            u_limit: limit_solution(u0, k, s.field.time)?,
        });
        let r = recovery_metric(&ctx, &op, &grid, u, s.field.time, 1.0)?;
        recovery_deviation = recovery_deviation.max(r.relative_deviation());
    }

    let lemma_l0 = lemma_l0_report(&ctx)?;
    let lemma_l2_deviation = lemma_l2_integral(&ctx, u0)?.relative_deviation();
    let final_intervals = interval_masses(&trajectory.final_field().values, &op, &grid, &ctx);
    Ok(RunOutcome {
        epsilon,
        ctx,
        op,
        trajectory,
        initial,
        rows,
        totals,
        rayleigh,
        overlay,
        recovery_deviation,
        lemma_l0,
        lemma_l2_deviation,
        final_intervals,
    })
}

/// Flux of a smooth zero-mean perturbation supported in `|x| < 1.5`:
/// `Σ cₘ sin(mπ(x + 1.5)/3)`.
fn noise_flux<R: Rng>(rng: &mut R, grid: &Grid) -> Vec<f64> {
    let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    grid.face_positions[1..grid.size]
        .iter()
        .map(|&x| {
            if x.abs() >= 1.5 {
                0.0
            } else {
                c.iter()
                    .enumerate()
                    .map(|(m, cm)| cm * ((m + 1) as f64 * std::f64::consts::PI * (x + 1.5) / 3.0).sin())
                    .sum()
            }
        })
        .collect()
}

/// Cell values of `−∂ₓf` for a face flux vanishing at both ends.
fn flux_divergence(flux: &[f64], grid: &Grid) -> Vec<f64> {
    let n = grid.size;
    (0..n)
        .map(|i| {
            let right = if i + 1 < n { flux[i] } else { 0.0 };
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            -(right - left) / grid.cell_widths[i]
        })
        .collect()
}

/// `J^ε(v) − J^ε(∂ₜρ)` for `n` competitors `v = ∂ₜρ + a(t)·p`, where `p`
/// mixes the recovery shape with smooth noise and `a` is a random
/// piecewise-constant amplitude on a log-uniform scale.
pub fn minimality_probe(
    traj: &Trajectory,
    ctx: &EpsilonContext,
    op: &DiscreteOperator,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let recorded = recorded_velocities(traj)?;
    let base = rayleigh_epsilon(traj, op, &recorded)?.functional;
    let grid = &traj.grid;
    let recovery = recovery_velocity(ctx, grid, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let pieces = 16;
    let t0 = traj.snapshots[0].field.time;
    let span = traj.final_field().time - t0;
    let mut gaps = Vec::with_capacity(n);
    for _ in 0..n {
        let weight = rng.random_range(-1.0..1.0);
        let noise = flux_divergence(&noise_flux(&mut rng, grid), grid);
        let shape: Vec<f64> = recovery.iter().zip(&noise).map(|(r, z)| weight * r + z).collect();
        let scale = 10f64.powf(rng.random_range(-3.0..0.5));
        let amplitude: Vec<f64> = (0..pieces).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let competitor: Vec<Vec<f64>> = recorded
            .iter()
            .zip(&traj.snapshots[1..])
            .map(|(v, s)| {
                let slot = (((s.field.time - t0) / span) * pieces as f64).floor() as usize;
                let a = amplitude[slot.min(pieces - 1)];
                v.iter().zip(&shape).map(|(v, p)| v + a * p).collect()
            })
            .collect();
        gaps.push(rayleigh_epsilon(traj, op, &competitor)?.functional - base);
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Least squares on `(ln ε, ln e)`.
pub fn fit_rate(errors: &[(f64, f64)]) -> Result<RateFit> {
    if errors.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", errors.len())));
    }
    if let Some((e, v)) = errors.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("nonpositive value {v} at ε = {e}")));
    }
    let n = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 1e-14 * xs.iter().map(|x| x * x).sum::<f64>().max(1.0) {
        return Err(Error::Fit("ε values are not distinct".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L0Deviation {
    pub name: &'static str,
    pub deviation: f64,
}

/// Scalar results of one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsMetrics {
    pub tracking_error: f64,
    pub rayleigh_gap: f64,
    pub metric_gap: f64,
    /// `∫g_u − ∫g^ε` when positive.
    pub metric_deficit: f64,
    pub energy_gap: f64,
    pub rayleigh_deficit: f64,
    pub layer_sup_i: f64,
    pub layer_l2t_j0: f64,
    pub lemma_l0: Vec<L0Deviation>,
    pub lemma_l2_deviation: f64,
    pub recovery_deviation: f64,
    pub max_apriori1: f64,
    pub max_apriori2: f64,
    pub max_energy_increase: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub mass_drift: f64,
    pub min_minimality_gap: f64,
    pub balance_defect: f64,
    pub metric_route_mismatch: f64,
    pub steps: usize,
    pub final_j_bar_mass: f64,
    pub rayleigh: RayleighReport,
}

impl EpsMetrics {
    fn from_outcome(o: &RunOutcome) -> Self {
        let t = &o.totals;
        let r = &o.rayleigh;
        Self {
            tracking_error: t.tracking_error,
            rayleigh_gap: (r.eps_functional - r.limit_functional).abs(),
            metric_gap: (t.metric_integral - t.limit_metric_integral).abs(),
            metric_deficit: (t.limit_metric_integral - t.metric_integral).max(0.0),
            energy_gap: (t.de_integral - t.limit_de_integral).abs(),
            rayleigh_deficit: (r.limit_functional - r.eps_functional).max(0.0),
            layer_sup_i: t.layer_sup_i,
            layer_l2t_j0: t.layer_l2t_j0,
            lemma_l0: o
                .lemma_l0
                .rows
                .iter()
                .map(|row| L0Deviation { name: row.name, deviation: row.deviation })
                .collect(),
            lemma_l2_deviation: o.lemma_l2_deviation,
            recovery_deviation: o.recovery_deviation,
            max_apriori1: t.max_apriori1,
            max_apriori2: t.max_apriori2,
            max_energy_increase: t.max_energy_increase,
            initial_energy: t.initial_energy,
            final_energy: t.final_energy,
            mass_drift: t.max_mass_drift,
            min_minimality_gap: r.minimality_gaps.iter().copied().fold(f64::INFINITY, f64::min),
            balance_defect: r.balance_defect(),
            metric_route_mismatch: t.max_metric_route_mismatch,
            steps: t.steps,
            final_j_bar_mass: o.final_intervals.j_bar,
            rayleigh: r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsEntry {
    pub epsilon: f64,
    pub error: Option<String>,
    pub metrics: Option<EpsMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    pub series: String,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    /// Acceptance criterion number the verdict belongs to.
    pub criterion: u8,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub potential: String,
    pub k: f64,
    pub alpha: f64,
    pub u0: f64,
    pub t_end: f64,
    pub seed: u64,
    pub competitors: usize,
    pub epsilon_floor: f64,
    pub grid: GridSettings,
    pub controls: TimeControls,
    pub layer_reference: LayerReference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub metadata: SweepMetadata,
    pub epsilons: Vec<f64>,
    pub per_eps: Vec<EpsEntry>,
    pub fitted_rates: Vec<RateEntry>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Values of one named series over the successful runs.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        self.per_eps
            .iter()
            .map(|e| e.metrics.as_ref().and_then(|m| series_value(m, name)))
            .collect()
    }
}

pub const SERIES: [&str; 8] = [
    "tracking_error",
    "rayleigh_gap",
    "metric_gap",
    "energy_gap",
    "layer_sup_i",
    "layer_l2t_j0",
    "lemma_l2_deviation",
    "recovery_deviation",
];

fn series_value(m: &EpsMetrics, name: &str) -> Option<f64> {
    Some(match name {
        "tracking_error" => m.tracking_error,
        "rayleigh_gap" => m.rayleigh_gap,
        "metric_gap" => m.metric_gap,
        "metric_deficit" => m.metric_deficit,
        "energy_gap" => m.energy_gap,
        "rayleigh_deficit" => m.rayleigh_deficit,
        "layer_sup_i" => m.layer_sup_i,
        "layer_l2t_j0" => m.layer_l2t_j0,
        "lemma_l2_deviation" => m.lemma_l2_deviation,
        "recovery_deviation" => m.recovery_deviation,
        other => m.lemma_l0.iter().find(|r| r.name == other)?.deviation,
    })
}

/// Strictly decreasing, or already at the converged floor throughout.
pub fn decreasing(values: &[f64]) -> bool {
    values.iter().all(|v| *v <= CONVERGED_FLOOR) || values.windows(2).all(|w| w[1] < w[0])
}

/// Nonincreasing, for one-sided deficits that may sit at zero.
fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

fn fmt_series(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    parts.join(", ")
}

/// Runs every ε (in parallel, order preserved) and assembles the report.
pub fn sweep(settings: &RunSettings, epsilons: &[f64]) -> Result<ConvergenceReport> {
    sweep_with(settings, epsilons, |_| ())
}

/// As [`sweep`], handing each successful run to `inspect` before it is dropped.
pub fn sweep_with<F>(settings: &RunSettings, epsilons: &[f64], inspect: F) -> Result<ConvergenceReport>
where
    F: Fn(&RunOutcome) + Sync,
{
    settings.validate()?;
    check_epsilons(epsilons)?;
    let k = kramers_rate(&settings.potential)?.k;
    let per_eps: Vec<EpsEntry> = epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| match run_single(settings, eps, i as u64) {
            Ok(o) => {
                inspect(&o);
                EpsEntry { epsilon: eps, error: None, metrics: Some(EpsMetrics::from_outcome(&o)) }
            }
            Err(e) => EpsEntry { epsilon: eps, error: Some(e.to_string()), metrics: None },
        })
        .collect();

    let fitted_rates = SERIES
        .iter()
        .map(|&name| {
            let raw: Vec<f64> = per_eps
                .iter()
                .map(|e| e.metrics.as_ref().and_then(|m| series_value(m, name)).unwrap_or(f64::NAN))
                .collect();
            let points: Vec<(f64, f64)> = epsilons.iter().copied().zip(raw.iter().copied()).collect();
            match fit_rate(&points) {
                Ok(fit) => RateEntry { series: name.into(), fit: Some(fit), error: None, raw },
                Err(e) => RateEntry { series: name.into(), fit: None, error: Some(e.to_string()), raw },
            }
        })
        .collect();

    let mut report = ConvergenceReport {
        metadata: SweepMetadata {
            potential: settings.potential.name().to_string(),
            k,
            alpha: settings.alpha,
            u0: settings.u0,
            t_end: settings.t_end,
            seed: settings.seed,
            competitors: settings.competitors,
            epsilon_floor: EPSILON_FLOOR,
            grid: settings.grid,
            controls: settings.controls,
            layer_reference: settings.layer_reference,
        },
        epsilons: epsilons.to_vec(),
        per_eps,
        fitted_rates,
        verdicts: Vec::new(),
    };
    report.verdicts = verdicts(&report);
    Ok(report)
}

fn verdicts(report: &ConvergenceReport) -> Vec<Verdict> {
    let mut out = Vec::new();
    let failed: Vec<String> = report
        .per_eps
        .iter()
        .filter_map(|e| e.error.as_ref().map(|m| format!("ε = {}: {m}", e.epsilon)))
        .collect();
    out.push(Verdict {
        name: "runs_completed".into(),
        criterion: 5,
        passed: failed.is_empty(),
        detail: if failed.is_empty() { "all runs finished".into() } else { failed.join("; ") },
    });
    let metrics: Vec<&EpsMetrics> = report.per_eps.iter().filter_map(|e| e.metrics.as_ref()).collect();
    if metrics.is_empty() {
        return out;
    }
    let complete = failed.is_empty();
    let mut monotone = |name: &str, series: &str, criterion: u8, one_sided: bool| {
        let values: Vec<f64> = metrics.iter().filter_map(|m| series_value(m, series)).collect();
        let ok = if one_sided { nonincreasing(&values) } else { decreasing(&values) };
        out.push(Verdict {
            name: name.into(),
            criterion,
            passed: complete && values.len() == metrics.len() && ok,
            detail: format!("{series}: [{}]", fmt_series(&values)),
        });
    };
    monotone("tracking_decreasing", "tracking_error", 5, false);
    for name in L0_NAMES {
        monotone(&format!("lemma_l0_{name}_decreasing"), name, 3, false);
    }
    monotone("metric_gap_decreasing", "metric_gap", 8, false);
    monotone("energy_gap_decreasing", "energy_gap", 8, false);
    monotone("rayleigh_gap_decreasing", "rayleigh_gap", 8, false);
    monotone("metric_liminf", "metric_deficit", 8, true);
    monotone("rayleigh_liminf", "rayleigh_deficit", 8, true);
    monotone("layer_sup_i_decreasing", "layer_sup_i", 9, false);
    monotone("layer_l2t_j0_decreasing", "layer_l2t_j0", 9, false);
    monotone("lemma_l2_decreasing", "lemma_l2_deviation", 9, false);

    let last = metrics[metrics.len() - 1];
    let mut cap = |name: &str, criterion: u8, passed: bool, detail: String| {
        out.push(Verdict { name: name.into(), criterion, passed, detail });
    };
    cap(
        "tracking_cap",
        5,
        last.tracking_error <= TRACKING_CAP,
        format!("{:.3e} at smallest ε, cap {TRACKING_CAP}", last.tracking_error),
    );
    cap(
        "recovery_metric",
        8,
        last.recovery_deviation <= RECOVERY_TOLERANCE,
        format!("{:.3e} at smallest ε, tolerance {RECOVERY_TOLERANCE}", last.recovery_deviation),
    );
    let worst = |f: fn(&EpsMetrics) -> f64| metrics.iter().map(|m| f(m)).fold(f64::NEG_INFINITY, f64::max);
    let drift = worst(|m| m.mass_drift);
    cap("mass_conservation", 4, drift <= MASS_DRIFT_CAP, format!("max drift {drift:.3e}"));
    let r = worst(|m| m.max_apriori1.max(m.max_apriori2));
    cap("apriori_residuals", 6, r <= RESIDUAL_CAP, format!("max residual {r:.3e}, cap {RESIDUAL_CAP}"));
    let rise = worst(|m| m.max_energy_increase / m.initial_energy.abs().max(1.0));
    cap(
        "energy_monotone",
        6,
        rise <= ENERGY_SLACK,
        format!("largest relative step increase {rise:.3e}"),
    );
    let b = worst(|m| m.balance_defect);
    cap("rayleigh_balance", 7, b <= BALANCE_TOLERANCE, format!("max relative defect {b:.3e}"));
    let g = metrics.iter().map(|m| m.min_minimality_gap).fold(f64::INFINITY, f64::min);
    cap(
        "minimality",
        7,
        g >= -MINIMALITY_TOLERANCE,
        format!("smallest gap {g:.3e} over {} competitors per ε", report.metadata.competitors),
    );
    out
}
