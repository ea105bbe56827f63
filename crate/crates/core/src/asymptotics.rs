//! Closed-form limit quantities and their finite-ε counterparts: the rate
//! constant, the transition layer `η_ε`, and the barrier integrals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{
    inf_log_gamma, integrate_gamma_weighted, integrate_inverse_gamma, log_integral_inverse_gamma, sup_log_gamma,
    EpsilonContext, Interval,
};
use crate::potential::Potential;

/// Below this distance from `u = 1` the analytic continuous extension is used.
pub const CONTINUITY_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateConstant {
    pub k: f64,
    pub curvature_barrier: f64,
    pub curvature_well: f64,
}

/// `k = π⁻¹ √(|H″(0)| H″(1))`.
pub fn kramers_rate(p: &Potential) -> Result<RateConstant> {
    let h0 = p.second_derivative(0.0);
    let h1 = p.second_derivative(p.well_location());
    if !(h0 < 0.0 && h1 > 0.0) {
        return Err(Error::Assumption(format!(
            "curvatures H''(0) = {h0}, H''(1) = {h1} do not describe a barrier between two wells"
        )));
    }
    Ok(RateConstant {
        k: (-h0 * h1).sqrt() / std::f64::consts::PI,
        curvature_barrier: h0,
        curvature_well: h1,
    })
}

/// `η_ε(x) = 2∫₀ˣ γ_ε⁻¹ / ∫₋₁¹ γ_ε⁻¹`, with the normalisation computed once.
#[derive(Debug, Clone)]
pub struct TransitionLayer<'a> {
    ctx: &'a EpsilonContext,
    log_half_norm: f64,
}

impl<'a> TransitionLayer<'a> {
    pub fn new(ctx: &'a EpsilonContext) -> Result<Self> {
        let log_norm = log_integral_inverse_gamma(ctx, Interval::new(-1.0, 1.0))?;
        Ok(Self {
            ctx,
            log_half_norm: log_norm - std::f64::consts::LN_2,
        })
    }

    /// `∫₋₁¹ τ_ε/γ_ε`.
    pub fn normalization(&self) -> f64 {
        (self.log_half_norm + std::f64::consts::LN_2).exp()
    }

    pub fn eta(&self, x: f64) -> Result<f64> {
        self.ctx.check_domain(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let log_num = log_integral_inverse_gamma(self.ctx, Interval::new(0.0, x.abs()))?;
        let log_eta = log_num - self.log_half_norm;
        if log_eta > f64::MAX_EXP as f64 * std::f64::consts::LN_2 {
            return Err(Error::Numerical(format!("η_ε({x}) overflows double precision")));
        }
        Ok(x.signum() * log_eta.exp())
    }

    /// `ũ_ε = 1 + (u − 1) η_ε(x)`.
    pub fn u_tilde(&self, u: f64, x: f64) -> Result<f64> {
        check_mass_fraction(u)?;
        Ok(1.0 + (u - 1.0) * self.eta(x)?)
    }
}

pub fn eta(ctx: &EpsilonContext, x: f64) -> Result<f64> {
    TransitionLayer::new(ctx)?.eta(x)
}

pub fn u_tilde(ctx: &EpsilonContext, u: f64, x: f64) -> Result<f64> {
    TransitionLayer::new(ctx)?.u_tilde(u, x)
}

pub(crate) fn check_mass_fraction(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 2.0) {
        return Err(Error::Domain(format!("mass coordinate u = {u} lies outside (0, 2)")));
    }
    Ok(())
}

/// `(2/(k(u−1))) ln(u/(2−u))`, equal to `4/k` at `u = 1`.
pub fn lemma_l2_limit(k: f64, u: f64) -> Result<f64> {
    check_mass_fraction(u)?;
    let d = u - 1.0;
    if d.abs() < CONTINUITY_CUTOFF {
        return Ok(4.0 / k);
    }
    Ok(2.0 / (k * d) * (u / (2.0 - u)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaL2 {
    pub finite_eps_value: f64,
    pub limit_value: f64,
}

impl LemmaL2 {
    pub fn relative_deviation(&self) -> f64 {
        (self.finite_eps_value / self.limit_value - 1.0).abs()
    }
}

/// `∫_{J⁰} τ_ε/(γ_ε ũ_ε)` against its limit.
pub fn lemma_l2_integral(ctx: &EpsilonContext, u: f64) -> Result<LemmaL2> {
    check_mass_fraction(u)?;
    let k = kramers_rate(&ctx.potential)?.k;
    let layer = TransitionLayer::new(ctx)?;
    let failure = std::cell::Cell::new(None);
    let finite = integrate_inverse_gamma(
        ctx,
        |x| match layer.u_tilde(u, x) {
            Ok(t) => 1.0 / t,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        },
        ctx.intervals.j_zero,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(LemmaL2 {
        finite_eps_value: finite?,
        limit_value: lemma_l2_limit(k, u)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaL0Row {
    pub name: &'static str,
    pub value: f64,
    /// `f64::INFINITY` for the quantity that diverges.
    #[serde(serialize_with = "serialize_target")]
    pub target: f64,
    /// `|value − target|`, or `1/value` for a divergent target.
    pub deviation: f64,
}

fn serialize_target<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaL0Report {
    pub epsilon: f64,
    pub alpha: f64,
    pub rows: Vec<LemmaL0Row>,
}

impl LemmaL0Report {
    pub fn row(&self, name: &str) -> Option<&LemmaL0Row> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub const L0_NAMES: [&str; 6] = [
    "int_J_plus_gamma",
    "int_J_bar_gamma",
    "sup_J_bar_gamma",
    "inf_I_gamma_over_tau",
    "int_J_zero_tau_over_gamma",
    "int_I_tau_over_gamma",
];

const SUP_SAMPLES: usize = 4000;

/// The six barrier and well quantities with their limits
/// `{1/2, 0, 0, ∞, 4/k, 0}`.
pub fn lemma_l0_report(ctx: &EpsilonContext) -> Result<LemmaL0Report> {
    let iv = &ctx.intervals;
    let k = kramers_rate(&ctx.potential)?.k;
    let one = |_: f64| 1.0;

    let j_plus = integrate_gamma_weighted(ctx, one, iv.j_plus)?;
    let mut j_bar = 0.0;
    let mut sup_bar = f64::NEG_INFINITY;
    for piece in iv.j_bar {
        j_bar += integrate_gamma_weighted(ctx, one, piece)?;
        sup_bar = sup_bar.max(sup_log_gamma(ctx, piece, SUP_SAMPLES)?);
    }
    let inf_i = inf_log_gamma(ctx, iv.i_plus, SUP_SAMPLES)?.min(inf_log_gamma(ctx, iv.i_minus, SUP_SAMPLES)?);
    let j_zero = integrate_inverse_gamma(ctx, one, iv.j_zero)?;
    let i_int = integrate_inverse_gamma(ctx, one, iv.i_plus)? + integrate_inverse_gamma(ctx, one, iv.i_minus)?;

    let finite = |name, value: f64, target: f64| LemmaL0Row {
        name,
        value,
        target,
        deviation: (value - target).abs(),
    };
    let inf_value = (inf_i - ctx.log_tau).exp();
    let rows = vec![
        finite(L0_NAMES[0], j_plus, 0.5),
        finite(L0_NAMES[1], j_bar, 0.0),
        finite(L0_NAMES[2], sup_bar.exp(), 0.0),
        LemmaL0Row {
            name: L0_NAMES[3],
            value: inf_value,
            target: f64::INFINITY,
            deviation: 1.0 / inf_value,
        },
        finite(L0_NAMES[4], j_zero, 4.0 / k),
        finite(L0_NAMES[5], i_int, 0.0),
    ];
    Ok(LemmaL0Report {
        epsilon: ctx.epsilon,
        alpha: ctx.alpha,
        rows,
    })
}
