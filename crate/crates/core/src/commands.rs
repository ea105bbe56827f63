//! The five subcommands, as library functions returning their text, JSON
//! and exit status.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{kramers_rate, lemma_l0_report, LemmaL0Report};
use crate::config::RunConfig;
use crate::diagnostics::DiagnosticRow;
use crate::error::{Error, Result};
use crate::experiments::{run_single, sweep_with, ConvergenceReport, OverlayPoint, RunOutcome};
use crate::fokker_planck::Field;
use crate::measure::{asymptotic_partition, make_context_on};
use crate::potential::check_assumptions;

pub const AUDIT_SAMPLES: usize = 2001;
pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub text: String,
    pub json: Value,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Numerical(format!("cannot serialise: {e}")))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Numerical(format!("cannot serialise: {e}")))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn eps_tag(eps: f64) -> String {
    format!("eps_{eps}")
}

#[derive(Debug, Clone, Serialize)]
struct L0Entry {
    epsilon: f64,
    report: Option<LemmaL0Report>,
    error: Option<String>,
}

/// Assumption audit and the barrier/well table per ε.
pub fn cmd_check(cfg: &RunConfig) -> Result<CommandOutcome> {
    let p = cfg.potential()?;
    let audit = check_assumptions(&p, AUDIT_SAMPLES, AUDIT_TOLERANCE)?;
    let mut text = String::new();
    writeln!(text, "potential {}", audit.potential).ok();
    for c in &audit.checks {
        let status = match (c.passed, c.advisory) {
            (true, _) => "ok",
            (false, true) => "advisory",
            (false, false) => "FAIL",
        };
        writeln!(text, "  {:<22} {:<8} worst {:.3e}", c.name, status, c.worst_violation).ok();
    }
    let mut entries = Vec::new();
    if audit.core_passed() {
        for &eps in &cfg.run.epsilons {
            let r = make_context_on(&p, eps, cfg.run.alpha, cfg.grid.half_width, &cfg.quadrature)
                .and_then(|ctx| lemma_l0_report(&ctx));
            match r {
                Ok(report) => {
                    writeln!(text, "ε = {eps}, α = {}", cfg.run.alpha).ok();
                    for row in &report.rows {
                        writeln!(
                            text,
                            "  {:<28} {:>14.6e}  target {:>8}  deviation {:.3e}",
                            row.name,
                            row.value,
                            if row.target.is_infinite() { "inf".to_string() } else { format!("{:.5}", row.target) },
                            row.deviation
                        )
                        .ok();
                    }
                    entries.push(L0Entry { epsilon: eps, report: Some(report), error: None });
                }
                Err(e) => {
                    writeln!(text, "ε = {eps}: {e}").ok();
                    entries.push(L0Entry { epsilon: eps, report: None, error: Some(e.to_string()) });
                }
            }
        }
    } else {
        let names: Vec<&str> = audit.failures().map(|c| c.name).collect();
        writeln!(text, "failed assumptions: {}", names.join(", ")).ok();
    }
    let failed_l0 = entries.iter().any(|e| e.error.is_some());
    let exit_code = if audit.core_passed() && !failed_l0 { 0 } else { 1 };
    Ok(CommandOutcome {
        exit_code,
        text,
        json: json!({ "assumptions": to_value(&audit)?, "lemma_l0": to_value(&entries)? }),
    })
}

/// `k`, `τ_ε` and the partition function, asymptotic and by quadrature.
pub fn cmd_rate(cfg: &RunConfig) -> Result<CommandOutcome> {
    let p = cfg.potential()?;
    let rate = kramers_rate(&p)?;
    let mut text = format!(
        "k = {:.15}  (H''(0) = {}, H''(1) = {})\n",
        rate.k, rate.curvature_barrier, rate.curvature_well
    );
    let (mut taus, mut z_asym, mut z_quad) = (Vec::new(), Vec::new(), Vec::new());
    for &eps in &cfg.run.epsilons {
        let ctx = make_context_on(&p, eps, cfg.run.alpha, cfg.grid.half_width, &cfg.quadrature)?;
        let za = asymptotic_partition(&p, eps)?;
        let zq = ctx.log_partition.exp();
        writeln!(text, "ε = {eps}: tau = {:.6e}  Z_asym = {za:.10}  Z_quad = {zq:.10}", ctx.tau).ok();
        taus.push(ctx.tau);
        z_asym.push(za);
        z_quad.push(zq);
    }
    Ok(CommandOutcome {
        exit_code: 0,
        text,
        json: json!({
            "potential": p.name(),
            "k": rate.k,
            "curvature_barrier": rate.curvature_barrier,
            "curvature_well": rate.curvature_well,
            "epsilon": cfg.run.epsilons,
            "tau": taus,
            "Z_asym": z_asym,
            "Z_quadrature": z_quad,
        }),
    })
}

pub const SNAPSHOT_HEADER: &str = "t,x,u,rho,log_gamma";
pub const DIAGNOSTIC_HEADER: &str =
    "t,u_plus,u_minus,E_eps,g_eps,apriori1_residual,apriori2_residual,layer_sup_I,layer_J0";

fn write_snapshots(path: &Path, o: &RunOutcome) -> Result<()> {
    let mut s = String::from(SNAPSHOT_HEADER);
    s.push('\n');
    let grid = &o.trajectory.grid;
    for snap in &o.trajectory.snapshots {
        for (i, u) in snap.field.values.iter().enumerate() {
            let lg = o.op.log_gamma_cell[i];
            writeln!(s, "{},{},{},{},{}", snap.field.time, grid.cell_centers[i], u, (lg + u.ln()).exp(), lg).ok();
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads a snapshot file back into fields, one per distinct time.
pub fn read_snapshots(path: &Path) -> Result<Vec<Field>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(Error::Parse(format!("{} lacks the snapshot header", path.display())));
    }
    let mut out: Vec<Field> = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 columns", n + 2)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)));
        let (t, u) = (num(cols[0])?, num(cols[2])?);
        match out.last_mut() {
            Some(f) if f.time == t => f.values.push(u),
            _ => out.push(Field { time: t, values: vec![u] }),
        }
    }
    Ok(out)
}

fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    let mut s = String::from(DIAGNOSTIC_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.t, r.u_plus, r.u_minus, r.energy, r.metric, r.apriori1, r.apriori2, r.layer_sup_i, r.layer_j0
        )
        .ok();
    }
    fs::write(path, s)?;
    Ok(())
}

/// Evolves each ε and writes snapshots, the diagnostic log and a summary.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutcome> {
    let settings = cfg.settings()?;
    let root = &cfg.output.dir;
    let mut text = String::new();
    let mut summaries = Vec::new();
    for (i, &eps) in cfg.run.epsilons.iter().enumerate() {
        let o = run_single(&settings, eps, i as u64)?;
        let dir = root.join(eps_tag(eps));
        fs::create_dir_all(&dir)?;
        write_snapshots(&dir.join("snapshots.csv"), &o)?;
        write_diagnostics(&dir.join("diagnostics.csv"), &o.rows)?;
        let summary = json!({
            "epsilon": eps,
            "tau": o.ctx.tau,
            "steps": o.totals.steps,
            "snapshots": o.trajectory.snapshots.len(),
            "initial": to_value(&o.initial)?,
            "totals": to_value(&o.totals)?,
            "rayleigh": to_value(&o.rayleigh)?,
            "recovery_deviation": o.recovery_deviation,
            "lemma_l2_deviation": o.lemma_l2_deviation,
            "final_interval_masses": to_value(&o.final_intervals)?,
        });
        write_json(&dir.join("summary.json"), &summary)?;
        let last = o.overlay.last().copied().unwrap_or(OverlayPoint { t: 0.0, u_plus: f64::NAN, u_limit: f64::NAN });
        writeln!(
            text,
            "ε = {eps}: {} steps, u+(T) = {:.6} (limit {:.6}), tracking {:.3e}, E drop {:.6e}, files in {}",
            o.totals.steps,
            last.u_plus,
            last.u_limit,
            o.totals.tracking_error,
            o.totals.initial_energy - o.totals.final_energy,
            dir.display()
        )
        .ok();
        summaries.push(summary);
    }
    Ok(CommandOutcome { exit_code: 0, text, json: Value::Array(summaries) })
}

fn run_sweep(cfg: &RunConfig) -> Result<(ConvergenceReport, BTreeMap<usize, Vec<OverlayPoint>>)> {
    let settings = cfg.settings()?;
    let overlays = Mutex::new(BTreeMap::new());
    let eps = &cfg.run.epsilons;
    let report = sweep_with(&settings, eps, |o| {
        if let Some(i) = eps.iter().position(|e| *e == o.epsilon) {
            overlays.lock().expect("overlay lock").insert(i, o.overlay.clone());
        }
    })?;
    Ok((report, overlays.into_inner().expect("overlay lock")))
}

fn verdict_text(report: &ConvergenceReport) -> String {
    let mut text = String::new();
    for v in &report.verdicts {
        writeln!(
            text,
            "{} [{}] {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.criterion,
            v.name,
            v.detail
        )
        .ok();
    }
    text
}

/// Runs the sweep and writes `report.json`, `rates.csv` and two-column plot data.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutcome> {
    let (report, overlays) = run_sweep(cfg)?;
    let root = &cfg.output.dir;
    fs::create_dir_all(root)?;
    write_json(&root.join("report.json"), &report)?;

    let mut rates = String::from("series,slope,r_squared,error,raw\n");
    for r in &report.fitted_rates {
        let raw: Vec<String> = r.raw.iter().map(|v| v.to_string()).collect();
        writeln!(
            rates,
            "{},{},{},{},{}",
            r.series,
            r.fit.map(|f| f.slope.to_string()).unwrap_or_default(),
            r.fit.map(|f| f.r_squared.to_string()).unwrap_or_default(),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
            raw.join(";")
        )
        .ok();
    }
    fs::write(root.join("rates.csv"), rates)?;

    for (i, points) in &overlays {
        let mut s = String::from("# t u_plus\n");
        for p in points {
            writeln!(s, "{} {}", p.t, p.u_plus).ok();
        }
        fs::write(root.join(format!("overlay_{}.dat", eps_tag(report.epsilons[*i]))), s)?;
    }
    if let Some(points) = overlays.values().next() {
        let mut s = String::from("# t u_limit\n");
        for p in points {
            writeln!(s, "{} {}", p.t, p.u_limit).ok();
        }
        fs::write(root.join("limit_curve.dat"), s)?;
    }
    for r in &report.fitted_rates {
        let mut s = format!("# epsilon {}\n", r.series);
        for (e, v) in report.epsilons.iter().zip(&r.raw) {
            if v.is_finite() {
                writeln!(s, "{e} {v}").ok();
            }
        }
        fs::write(root.join(format!("error_{}.dat", r.series)), s)?;
    }

    let mut text = verdict_text(&report);
    writeln!(text, "report written to {}", root.join("report.json").display()).ok();
    Ok(CommandOutcome {
        exit_code: if report.passed() { 0 } else { 1 },
        text,
        json: to_value(&report)?,
    })
}

/// Rayleigh functional of each ε-trajectory against the limit functional.
pub fn cmd_rayleigh(cfg: &RunConfig) -> Result<CommandOutcome> {
    let (report, _) = run_sweep(cfg)?;
    let mut text = format!(
        "{:>6} {:>14} {:>14} {:>12} {:>12} {:>12}\n",
        "eps", "J_eps", "J_limit", "|gap|", "min_gap", "balance"
    );
    let mut rows = Vec::new();
    for e in &report.per_eps {
        match &e.metrics {
            Some(m) => {
                let r = &m.rayleigh;
                writeln!(
                    text,
                    "{:>6} {:>14.6e} {:>14.6e} {:>12.3e} {:>12.3e} {:>12.3e}",
                    e.epsilon, r.eps_functional, r.limit_functional, m.rayleigh_gap, m.min_minimality_gap, m.balance_defect
                )
                .ok();
                rows.push(json!({ "epsilon": e.epsilon, "rayleigh": to_value(r)?, "gap": m.rayleigh_gap }));
            }
            None => {
                writeln!(text, "{:>6} failed: {}", e.epsilon, e.error.as_deref().unwrap_or("")).ok();
                rows.push(json!({ "epsilon": e.epsilon, "error": e.error }));
            }
        }
    }
    let relevant = ["runs_completed", "minimality", "rayleigh_balance", "rayleigh_gap_decreasing"];
    let mut ok = true;
    for v in report.verdicts.iter().filter(|v| relevant.contains(&v.name.as_str())) {
        ok &= v.passed;
        writeln!(text, "{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail).ok();
    }
    let root = &cfg.output.dir;
    fs::create_dir_all(root)?;
    let out = Value::Array(rows);
    write_json(&root.join("rayleigh.json"), &out)?;
    Ok(CommandOutcome { exit_code: if ok { 0 } else { 1 }, text, json: out })
}

/// Output directory of a simulate run for one ε.
pub fn simulate_dir(root: &Path, eps: f64) -> PathBuf {
    root.join(eps_tag(eps))
}
