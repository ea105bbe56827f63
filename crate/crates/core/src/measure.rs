//! The invariant measure `γ_ε = Z_ε⁻¹ e^{-H/ε²}` and the interval family
//! on which its asymptotics are stated.
//!
//! Everything is carried as logarithms: `γ_ε` and `τ_ε/γ_ε` at `ε = 0.1`
//! already span more than a thousand decades over `[-3, 3]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::quadrature::{Quadrature, QuadratureSettings};

/// Smallest ε for which `τ_ε` is comfortably representable in double precision.
pub const EPSILON_FLOOR: f64 = 0.08;
/// Default half-width of the truncated domain.
pub const DEFAULT_TRUNCATION: f64 = 3.0;
/// Points where `γ_ε` or `1/γ_ε` peaks.
pub const FOCUS: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// The intervals `J_±`, `J⁰`, `J̄` and `I_±` at width `a = ε^α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalFamily {
    pub width: f64,
    pub j_plus: Interval,
    pub j_minus: Interval,
    pub j_zero: Interval,
    /// Complement of `J_+ ∪ J_-` in the truncated domain, as three pieces.
    pub j_bar: [Interval; 3],
    pub i_plus: Interval,
    pub i_minus: Interval,
    /// Outer end of `I_+` before trimming: the point beyond the well where
    /// the potential is back at the barrier height.
    pub outer_point: f64,
    /// Whether `J⁰ ⊂ J̄`, i.e. `2ε^α < 1`.
    pub nested: bool,
}

impl IntervalFamily {
    pub fn new(width: f64, outer_point: f64, truncation: f64) -> Result<Self> {
        if !(width > 0.0) || 2.0 * width >= outer_point {
            return Err(Error::Config(format!(
                "interval width {width} leaves I_± empty (outer point {outer_point})"
            )));
        }
        if 1.0 + width >= truncation {
            return Err(Error::Config(format!(
                "J_± = 1 ± {width} does not fit in the truncated domain [-{truncation}, {truncation}]"
            )));
        }
        Ok(Self {
            width,
            j_plus: Interval::new(1.0 - width, 1.0 + width),
            j_minus: Interval::new(-1.0 - width, -1.0 + width),
            j_zero: Interval::new(-width, width),
            j_bar: [
                Interval::new(-truncation, -1.0 - width),
                Interval::new(-1.0 + width, 1.0 - width),
                Interval::new(1.0 + width, truncation),
            ],
            i_plus: Interval::new(width, outer_point - width),
            i_minus: Interval::new(-outer_point + width, -width),
            outer_point,
            nested: 2.0 * width < 1.0,
        })
    }

    pub fn in_i(&self, x: f64) -> bool {
        self.i_plus.contains(x) || self.i_minus.contains(x)
    }

    pub fn in_j_bar(&self, x: f64) -> bool {
        !(self.j_plus.contains(x) || self.j_minus.contains(x))
    }
}

/// Everything that depends on ε but not on a discretisation.
#[derive(Debug, Clone)]
pub struct EpsilonContext {
    pub epsilon: f64,
    pub alpha: f64,
    pub tau: f64,
    pub log_tau: f64,
    pub log_partition: f64,
    pub truncation: f64,
    pub potential: Potential,
    pub intervals: IntervalFamily,
    quad: Quadrature,
}

impl EpsilonContext {
    #[inline]
    pub fn inv_eps2(&self) -> f64 {
        1.0 / (self.epsilon * self.epsilon)
    }

    /// `ln γ_ε(x)` without the domain check.
    #[inline]
    pub fn log_gamma_at(&self, x: f64) -> f64 {
        -self.potential.value(x) * self.inv_eps2() - self.log_partition
    }

    /// `ln(τ_ε/γ_ε(x))`.
    #[inline]
    pub fn log_inverse_weight_at(&self, x: f64) -> f64 {
        self.log_tau - self.log_gamma_at(x)
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    /// Upper bound on the `γ_ε`-mass outside the truncated domain, from the
    /// tangent-line bound on `H` beyond `L`. Infinite if `H` is not
    /// increasing at `L`.
    pub fn truncation_mass_bound(&self) -> f64 {
        let l = self.truncation;
        let slope = self.potential.first_derivative(l);
        if slope <= 0.0 {
            return f64::INFINITY;
        }
        let e2 = self.epsilon * self.epsilon;
        (2f64.ln() - self.potential.value(l) / e2 + e2.ln() - slope.ln() - self.log_partition).exp()
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if !x.is_finite() || x.abs() > self.truncation * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "x = {x} lies outside the truncated domain [-{0}, {0}]",
                self.truncation
            )));
        }
        Ok(())
    }

    pub fn check_interval(&self, iv: Interval) -> Result<()> {
        self.check_domain(iv.lo)?;
        self.check_domain(iv.hi)?;
        if iv.hi < iv.lo {
            return Err(Error::Domain(format!("interval ({}, {}) is reversed", iv.lo, iv.hi)));
        }
        Ok(())
    }
}

/// Builds the context on the default truncated domain `[-3, 3]`.
pub fn make_context(p: &Potential, epsilon: f64, alpha: f64, quad: &QuadratureSettings) -> Result<EpsilonContext> {
    make_context_on(p, epsilon, alpha, DEFAULT_TRUNCATION, quad)
}

pub fn make_context_on(
    p: &Potential,
    epsilon: f64,
    alpha: f64,
    truncation: f64,
    quad: &QuadratureSettings,
) -> Result<EpsilonContext> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(truncation > 1.0) || !truncation.is_finite() {
        return Err(Error::Config(format!("truncation must exceed 1, got {truncation}")));
    }
    let quad = Quadrature::new(quad.clone())?;
    let outer_point = p.outer_level_point()?;
    let intervals = IntervalFamily::new(epsilon.powf(alpha), outer_point, truncation)?;

    let e2 = epsilon * epsilon;
    let log_tau = -2.0 * epsilon.ln() - 1.0 / e2;
    let log_partition = quad.log_integrate_exp(&|x| -p.value(x) / e2, -truncation, truncation, &FOCUS)?;

    Ok(EpsilonContext {
        epsilon,
        alpha,
        tau: log_tau.exp(),
        log_tau,
        log_partition,
        truncation,
        potential: p.clone(),
        intervals,
        quad,
    })
}

pub fn log_gamma(ctx: &EpsilonContext, x: f64) -> Result<f64> {
    ctx.check_domain(x)?;
    Ok(ctx.log_gamma_at(x))
}

/// Laplace expansion `Z_ε ≈ ε·2√(2π)/√H″(1)`.
pub fn asymptotic_partition(p: &Potential, epsilon: f64) -> Result<f64> {
    let h1 = p.second_derivative(p.well_location());
    if !(h1 > 0.0) {
        return Err(Error::Assumption(format!("well curvature H''(1) = {h1} is not positive")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(epsilon * 2.0 * (2.0 * std::f64::consts::PI).sqrt() / h1.sqrt())
}

/// `∫ f γ_ε` over the interval.
pub fn integrate_gamma_weighted<F: Fn(f64) -> f64>(ctx: &EpsilonContext, f: F, iv: Interval) -> Result<f64> {
    ctx.check_interval(iv)?;
    ctx.quad
        .integrate_weighted(&f, &|x| ctx.log_gamma_at(x), iv.lo, iv.hi, &FOCUS)
}

/// `∫ f τ_ε/γ_ε` over the interval.
pub fn integrate_inverse_gamma<F: Fn(f64) -> f64>(ctx: &EpsilonContext, f: F, iv: Interval) -> Result<f64> {
    ctx.check_interval(iv)?;
    ctx.quad
        .integrate_weighted(&f, &|x| ctx.log_inverse_weight_at(x), iv.lo, iv.hi, &FOCUS)
}

/// `ln ∫ τ_ε/γ_ε` over the interval; finite even where the integral overflows.
pub fn log_integral_inverse_gamma(ctx: &EpsilonContext, iv: Interval) -> Result<f64> {
    ctx.check_interval(iv)?;
    ctx.quad
        .log_integrate_exp(&|x| ctx.log_inverse_weight_at(x), iv.lo, iv.hi, &FOCUS)
}

/// `ln ∫ γ_ε` over the interval.
pub fn log_integral_gamma(ctx: &EpsilonContext, iv: Interval) -> Result<f64> {
    ctx.check_interval(iv)?;
    ctx.quad.log_integrate_exp(&|x| ctx.log_gamma_at(x), iv.lo, iv.hi, &FOCUS)
}

/// Supremum of `ln γ_ε` on the closure of the interval, sampled on
/// `samples` points plus the endpoints and the critical points inside.
pub fn sup_log_gamma(ctx: &EpsilonContext, iv: Interval, samples: usize) -> Result<f64> {
    Ok(sampled_extremum(ctx, iv, samples, f64::max, f64::NEG_INFINITY)?)
}

pub fn inf_log_gamma(ctx: &EpsilonContext, iv: Interval, samples: usize) -> Result<f64> {
    Ok(sampled_extremum(ctx, iv, samples, f64::min, f64::INFINITY)?)
}

fn sampled_extremum(
    ctx: &EpsilonContext,
    iv: Interval,
    samples: usize,
    pick: fn(f64, f64) -> f64,
    init: f64,
) -> Result<f64> {
    ctx.check_interval(iv)?;
    let n = samples.max(2);
    let mut acc = init;
    for i in 0..=n {
        let x = iv.lo + iv.len() * i as f64 / n as f64;
        acc = pick(acc, ctx.log_gamma_at(x));
    }
    for c in FOCUS {
        if iv.contains(c) {
            acc = pick(acc, ctx.log_gamma_at(c));
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(eps: f64) -> EpsilonContext {
        make_context(&Potential::quartic(), eps, 0.5, &QuadratureSettings::default()).unwrap()
    }

    #[test]
    fn tau_matches_definition() {
        let c = ctx(0.2);
        assert_relative_eq!(c.tau, 25.0 * (-25.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(c.tau, 3.4720e-10, max_relative = 1e-4);
    }

    #[test]
    fn intervals_at_small_width() {
        let c = make_context(&Potential::quartic(), 0.04, 0.5, &QuadratureSettings::default()).unwrap();
        assert_relative_eq!(c.intervals.j_plus.lo, 0.8, epsilon = 1e-15);
        assert_relative_eq!(c.intervals.j_plus.hi, 1.2, epsilon = 1e-15);
        assert!(c.intervals.nested);
    }

    #[test]
    fn wide_intervals_flag_nesting() {
        let c = ctx(0.3);
        assert!(!c.intervals.nested);
        assert!(c.intervals.i_plus.lo < c.intervals.i_plus.hi);
    }

    #[test]
    fn rejects_bad_parameters() {
        let q = QuadratureSettings::default();
        let p = Potential::quartic();
        assert!(make_context(&p, 0.0, 0.5, &q).is_err());
        assert!(make_context(&p, 1.0, 0.5, &q).is_err());
        assert!(make_context(&p, 0.2, 1.0, &q).is_err());
        assert!(make_context(&p, 0.9, 0.5, &q).is_err());
    }

    #[test]
    fn log_gamma_special_points() {
        let c = ctx(0.2);
        assert_eq!(log_gamma(&c, 1.0).unwrap(), -c.log_partition);
        assert_relative_eq!(log_gamma(&c, 0.0).unwrap(), -25.0 - c.log_partition, max_relative = 1e-15);
        for x in [0.1, 0.7, 1.3, 2.9] {
            assert_eq!(log_gamma(&c, x).unwrap(), log_gamma(&c, -x).unwrap());
        }
        assert!(log_gamma(&c, 3.5).is_err());
        assert!(log_gamma(&c, f64::NAN).is_err());
    }

    #[test]
    fn asymptotic_partition_values() {
        let q = Potential::quartic();
        assert_relative_eq!(asymptotic_partition(&q, 0.2).unwrap(), 0.354490770, max_relative = 1e-8);
        assert_relative_eq!(asymptotic_partition(&q, 0.1).unwrap(), 0.177245385, max_relative = 1e-8);
        let single = Potential::polynomial("flat", vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(asymptotic_partition(&single, 0.2), Err(Error::Assumption(_))));
    }

    #[test]
    fn partition_ratio_tends_to_one() {
        let mut prev = f64::INFINITY;
        for eps in [0.4, 0.3, 0.2, 0.15, 0.1] {
            let c = ctx(eps);
            let d = (c.log_partition.exp() / asymptotic_partition(&c.potential, eps).unwrap() - 1.0).abs();
            assert!(d < prev, "eps={eps} d={d}");
            prev = d;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn gamma_is_a_probability_density() {
        for eps in [0.3, 0.1] {
            let c = ctx(eps);
            let full = Interval::new(-3.0, 3.0);
            assert!((integrate_gamma_weighted(&c, |_| 1.0, full).unwrap() - 1.0).abs() < 1e-8);
            assert!(integrate_gamma_weighted(&c, |x| x, full).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn well_mass_is_half() {
        let c = ctx(0.1);
        let m = integrate_gamma_weighted(&c, |_| 1.0, c.intervals.j_plus).unwrap();
        assert!((m - 0.5).abs() < 0.01, "{m}");
    }

    #[test]
    fn inverse_weight_on_barrier_interval() {
        let k = 4.0 * 2f64.sqrt() / std::f64::consts::PI;
        let c = ctx(0.1);
        let v = integrate_inverse_gamma(&c, |_| 1.0, c.intervals.j_zero).unwrap();
        assert!((v * k / 4.0 - 1.0).abs() < 0.01, "{v}");
        assert_eq!(integrate_inverse_gamma(&c, |_| 1.0, Interval::new(0.3, 0.3)).unwrap(), 0.0);
        let l = log_integral_inverse_gamma(&c, c.intervals.j_zero).unwrap();
        assert_relative_eq!(l.exp(), v, max_relative = 1e-9);
    }

    #[test]
    fn far_field_log_integral_is_finite() {
        let c = ctx(0.1);
        let l = log_integral_inverse_gamma(&c, Interval::new(2.0, 3.0)).unwrap();
        assert!(l.is_finite() && l > 700.0);
        let g = log_integral_gamma(&c, Interval::new(2.0, 3.0)).unwrap();
        assert!(g.is_finite() && g < -700.0);
    }

    #[test]
    fn truncation_bound_is_tiny() {
        let c = ctx(0.4);
        let b = c.truncation_mass_bound();
        assert!(b > 0.0 && b < 1e-100, "{b}");
    }

    #[test]
    fn sampled_extrema() {
        let c = ctx(0.2);
        let s = sup_log_gamma(&c, Interval::new(-0.5, 0.5), 100).unwrap();
        assert_eq!(s, c.log_gamma_at(0.5));
        let i = inf_log_gamma(&c, Interval::new(-0.5, 0.5), 100).unwrap();
        assert_eq!(i, c.log_gamma_at(0.0));
    }
}
