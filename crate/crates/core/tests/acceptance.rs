//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use kramers::asymptotics::{kramers_rate, lemma_l0_report, lemma_l2_integral, L0_NAMES};
use kramers::commands::{cmd_rate, cmd_sweep};
use kramers::config::RunConfig;
use kramers::experiments::{decreasing, run_single, sweep, ConvergenceReport, EpsMetrics, RunSettings, ENERGY_SLACK};
use kramers::measure::{asymptotic_partition, make_context};
use kramers::potential::Potential;
use kramers::quadrature::QuadratureSettings;

type Outcome = Result<(bool, String), String>;

fn series(values: &[f64]) -> String {
    let v: Vec<String> = values.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", v.join(", "))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_rate() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.run.epsilons.clear();
    let start = Instant::now();
    let out = cmd_rate(&cfg).map_err(err)?;
    let elapsed = start.elapsed();
    let k = out.json["k"].as_f64().ok_or("no k in output")?;
    let exact = 4.0 * 2f64.sqrt() / std::f64::consts::PI;
    let d = (k - exact).abs();
    Ok((
        d <= 1e-12 && elapsed < Duration::from_millis(1),
        format!("k = {k:.15}, |k − 4√2/π| = {d:.1e}, {elapsed:?}"),
    ))
}

fn c2_partition() -> Outcome {
    let start = Instant::now();
    let p = Potential::quartic();
    let mut dev = Vec::new();
    for eps in [0.4, 0.3, 0.2, 0.1] {
        let ctx = make_context(&p, eps, 0.5, &QuadratureSettings::default()).map_err(err)?;
        let za = asymptotic_partition(&p, eps).map_err(err)?;
        dev.push((ctx.log_partition.exp() / za - 1.0).abs());
    }
    let elapsed = start.elapsed();
    let ok = decreasing(&dev) && dev[3] <= 0.05 && elapsed < Duration::from_secs(1);
    Ok((ok, format!("|Z/Z_asym − 1| = {}, {elapsed:?}", series(&dev))))
}

fn c3_lemma_l0() -> Outcome {
    let start = Instant::now();
    let p = Potential::quartic();
    let k = kramers_rate(&p).map_err(err)?.k;
    let mut reports = Vec::new();
    for eps in [0.3, 0.2, 0.15, 0.1] {
        let ctx = make_context(&p, eps, 0.5, &QuadratureSettings::default()).map_err(err)?;
        reports.push(lemma_l0_report(&ctx).map_err(err)?);
    }
    let mut ok = true;
    let mut bad = Vec::new();
    for name in L0_NAMES {
        let d: Vec<f64> = reports.iter().map(|r| r.row(name).map(|x| x.deviation).unwrap_or(f64::NAN)).collect();
        if !decreasing(&d) {
            ok = false;
            bad.push(format!("{name} {}", series(&d)));
        }
    }
    let last = &reports[3];
    let jp = last.row("int_J_plus_gamma").ok_or("missing row")?.value;
    let j0 = last.row("int_J_zero_tau_over_gamma").ok_or("missing row")?.value;
    let jp_dev = (jp / 0.5 - 1.0).abs();
    let j0_dev = (j0 / (4.0 / k) - 1.0).abs();
    let elapsed = start.elapsed();
    ok &= jp_dev <= 0.02 && j0_dev <= 0.1 && elapsed < Duration::from_secs(5);
    let mut detail = format!(
        "six deviations decreasing, ∫_J+ γ off by {jp_dev:.1e}, ∫_J0 τ/γ off by {j0_dev:.2e} at ε = 0.1, {elapsed:?}"
    );
    if !bad.is_empty() {
        detail = format!("not decreasing: {}", bad.join("; "));
    }
    Ok((ok, detail))
}

fn settings(u0: f64) -> RunSettings {
    RunSettings::new(Potential::quartic(), u0, 2.0)
}

fn c4_stationary(energy_ok: &mut Vec<(String, f64)>) -> Outcome {
    let start = Instant::now();
    let o = run_single(&settings(1.0), 0.25, 0).map_err(err)?;
    energy_ok.push(("stationary ε=0.25".into(), o.totals.max_energy_increase));
    let t = &o.totals;
    Ok((
        t.tracking_error <= 1e-8 && t.max_mass_drift <= 1e-10,
        format!(
            "sup|u⁺ − 1| = {:.1e}, mass drift {:.1e}, {:?}",
            t.tracking_error,
            t.max_mass_drift,
            start.elapsed()
        ),
    ))
}

fn metrics(report: &ConvergenceReport) -> Result<Vec<&EpsMetrics>, String> {
    report
        .per_eps
        .iter()
        .map(|e| {
            e.metrics
                .as_ref()
                .ok_or_else(|| format!("run at ε = {} failed: {}", e.epsilon, e.error.as_deref().unwrap_or("")))
        })
        .collect()
}

fn c5_tracking(m: &[&EpsMetrics]) -> Outcome {
    let d: Vec<f64> = m.iter().map(|x| x.tracking_error).collect();
    Ok((decreasing(&d) && d[d.len() - 1] <= 0.05, format!("sup_t|u⁺ − u| = {}", series(&d))))
}

fn c6_identities(m: &[&EpsMetrics], energy: &mut Vec<(String, f64)>) -> Outcome {
    let fine_settings = {
        let mut s = settings(1.5);
        s.controls.dt *= 0.5;
        s.competitors = 0;
        s
    };
    let fine = run_single(&fine_settings, 0.3, 1).map_err(err)?;
    energy.push(("ε=0.3 at dt/2".into(), fine.totals.max_energy_increase));
    let coarse = m[1];
    let worst = m.iter().map(|x| x.max_apriori1.max(x.max_apriori2)).fold(0.0, f64::max);
    let s1 = coarse.max_apriori1 / fine.totals.max_apriori1;
    let s2 = coarse.max_apriori2 / fine.totals.max_apriori2;
    let rise = energy.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let ok = worst <= 1e-6 && s1 >= 2.0 && s2 >= 2.0 && rise <= ENERGY_SLACK;
    Ok((
        ok,
        format!(
            "max residual {worst:.2e}, shrink under dt/2: {s1:.2}× and {s2:.2}×, largest energy rise {rise:.1e} over {} runs",
            energy.len()
        ),
    ))
}

fn c7_minimality(m: &[&EpsMetrics]) -> Outcome {
    let r = &m[1].rayleigh;
    let min_gap = r.minimality_gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let balance = r.balance_defect();
    Ok((
        r.minimality_gaps.len() == 50 && min_gap >= -1e-6 && balance <= 1e-4,
        format!(
            "{} competitors, smallest gap {min_gap:.3e}, |J + ½∫g|/(½∫g) = {balance:.1e}",
            r.minimality_gaps.len()
        ),
    ))
}

fn c8_gamma_shadow(m: &[&EpsMetrics]) -> Outcome {
    let g: Vec<f64> = m.iter().map(|x| x.metric_gap).collect();
    let e: Vec<f64> = m.iter().map(|x| x.energy_gap).collect();
    let rec = m[m.len() - 1].recovery_deviation;
    Ok((
        decreasing(&g) && decreasing(&e) && rec <= 0.1,
        format!("metric gap {}, DE gap {}, recovery deviation {rec:.2e}", series(&g), series(&e)),
    ))
}

fn c9_layer(m: &[&EpsMetrics]) -> Outcome {
    let s: Vec<f64> = m.iter().map(|x| x.layer_sup_i).collect();
    let j: Vec<f64> = m.iter().map(|x| x.layer_l2t_j0).collect();
    let ctx = make_context(&Potential::quartic(), 0.15, 0.5, &QuadratureSettings::default()).map_err(err)?;
    let l2 = lemma_l2_integral(&ctx, 1.5).map_err(err)?.relative_deviation();
    Ok((
        decreasing(&s) && decreasing(&j) && l2 <= 0.1,
        format!("sup_I {}, L²_t(J0) {}, L2 integral deviation {l2:.2e} at ε = 0.15", series(&s), series(&j)),
    ))
}

fn c10_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let mut cfg = RunConfig::default();
    cfg.output.dir = a.path().to_path_buf();
    cmd_sweep(&cfg).map_err(err)?;
    cfg.output.dir = b.path().to_path_buf();
    cmd_sweep(&cfg).map_err(err)?;
    let ra = std::fs::read(a.path().join("report.json")).map_err(err)?;
    let rb = std::fs::read(b.path().join("report.json")).map_err(err)?;
    Ok((ra == rb, format!("report.json {} bytes, identical: {}", ra.len(), ra == rb)))
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut energy = Vec::new();
    results.push((1, "rate formula", c1_rate()));
    results.push((2, "partition asymptotics", c2_partition()));
    results.push((3, "barrier and well integrals", c3_lemma_l0()));
    results.push((4, "stationarity", c4_stationary(&mut energy)));

    let start = Instant::now();
    let swept = sweep(&settings(1.5), &[0.35, 0.3, 0.25]).map_err(err);
    eprintln!("sweep over ε ∈ {{0.35, 0.3, 0.25}} took {:?}", start.elapsed());
    match swept.and_then(|r| metrics(&r).map(|m| m.into_iter().cloned().collect::<Vec<_>>())) {
        Ok(owned) => {
            let m: Vec<&EpsMetrics> = owned.iter().collect();
            for x in &m {
                energy.push(("sweep run".into(), x.max_energy_increase));
            }
            results.push((5, "limit tracking", c5_tracking(&m)));
            results.push((6, "structural identities", c6_identities(&m, &mut energy)));
            results.push((7, "Rayleigh minimality", c7_minimality(&m)));
            results.push((8, "Γ-limit shadow", c8_gamma_shadow(&m)));
            results.push((9, "layer approximation", c9_layer(&m)));
        }
        Err(e) => {
            for (n, name) in [
                (5, "limit tracking"),
                (6, "structural identities"),
                (7, "Rayleigh minimality"),
                (8, "Γ-limit shadow"),
                (9, "layer approximation"),
            ] {
                results.push((n, name, Err(e.clone())));
            }
        }
    }
    results.push((10, "determinism", c10_determinism()));

    let mut passed = 0;
    for (n, name, r) in &results {
        match r {
            Ok((true, d)) => {
                passed += 1;
                println!("PASS  {n:>2}  {name}: {d}");
            }
            Ok((false, d)) => println!("FAIL  {n:>2}  {name}: {d}"),
            Err(e) => println!("FAIL  {n:>2}  {name}: error: {e}"),
        }
    }
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
