//! Composite Gauss–Legendre quadrature with adaptive bisection.
//!
//! Integrands of the form `f(x)·exp(φ(x))` are rescaled by the sampled
//! maximum of `φ` before any exponential is taken, so weights spanning
//! hundreds of orders of magnitude neither overflow nor flush to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSettings {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Initial panels per piece between focus points.
    pub panels: usize,
    /// Relative tolerance between successive refinements of a panel.
    pub tolerance: f64,
    /// Bisection depth limit per initial panel.
    pub max_depth: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            nodes: 16,
            panels: 8,
            tolerance: 1e-10,
            max_depth: 40,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.nodes > 64 {
            return Err(Error::Config(format!("quadrature nodes must lie in [2, 64], got {}", self.nodes)));
        }
        if self.panels == 0 {
            return Err(Error::Config("quadrature needs at least one panel".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-2) {
            return Err(Error::Config(format!("quadrature tolerance must lie in (0, 1e-2), got {}", self.tolerance)));
        }
        if self.max_depth == 0 || self.max_depth > 60 {
            return Err(Error::Config(format!("quadrature depth must lie in [1, 60], got {}", self.max_depth)));
        }
        Ok(())
    }
}

/// A reusable rule with its settings.
#[derive(Debug, Clone)]
pub struct Quadrature {
    settings: QuadratureSettings,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Result of a signed integration, with the integral of the absolute value
/// used as the error scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub magnitude: f64,
}

impl Quadrature {
    pub fn new(settings: QuadratureSettings) -> Result<Self> {
        settings.validate()?;
        let (nodes, weights) = gauss_legendre(settings.nodes);
        Ok(Self {
            settings,
            nodes,
            weights,
        })
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    /// Single-panel rule on `[a, b]`, returning `(Σ wf, Σ w|f|)`.
    #[inline]
    pub fn panel<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        let mut sa = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            s += w * v;
            sa += w * v.abs();
        }
        (s * half, sa * half)
    }

    /// Adaptive integral of `f` over `[a, b]`, with initial panels graded
    /// geometrically toward each of `focus` that lies in `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, focus: &[f64]) -> Result<Integral> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("integration bounds [{a}, {b}] are not finite")));
        }
        if a == b {
            return Ok(Integral { value: 0.0, magnitude: 0.0 });
        }
        if a > b {
            let r = self.integrate(f, b, a, focus)?;
            return Ok(Integral { value: -r.value, magnitude: r.magnitude });
        }
        let mut total = 0.0;
        let mut total_abs = 0.0;
        for (lo, hi) in initial_panels(a, b, focus, self.settings.panels) {
            let (v, m) = self.adapt(f, lo, hi)?;
            total += v;
            total_abs += m;
        }
        if !total.is_finite() {
            return Err(Error::Numerical(format!("integral over [{a}, {b}] is not finite")));
        }
        Ok(Integral { value: total, magnitude: total_abs })
    }

    fn adapt<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
        let tol = self.settings.tolerance;
        let mut stack = vec![(a, b, self.panel(f, a, b), 0usize)];
        let mut value = 0.0;
        let mut magnitude = 0.0;
        while let Some((lo, hi, (coarse, coarse_abs), depth)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = self.panel(f, lo, mid);
            let right = self.panel(f, mid, hi);
            let fine = left.0 + right.0;
            let fine_abs = left.1 + right.1;
            let err = (fine - coarse).abs();
            if err <= tol * fine_abs.max(coarse_abs) || fine_abs == 0.0 {
                value += fine;
                magnitude += fine_abs;
                continue;
            }
            if !err.is_finite() {
                return Err(Error::Numerical(format!("integrand is not finite on [{lo}, {hi}]")));
            }
            if depth >= self.settings.max_depth {
                return Err(Error::Quadrature {
                    lo,
                    hi,
                    achieved: err / fine_abs,
                    target: tol,
                });
            }
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
        Ok((value, magnitude))
    }

    /// `ln ∫ₐᵇ exp(φ)` for a real log-integrand.
    ///
    /// Returns `-∞` for an empty interval.
    pub fn log_integrate_exp<P: Fn(f64) -> f64>(&self, phi: &P, a: f64, b: f64, focus: &[f64]) -> Result<f64> {
        if a == b {
            return Ok(f64::NEG_INFINITY);
        }
        let (a, b) = (a.min(b), a.max(b));
        let shift = sampled_max(phi, a, b, focus);
        if !shift.is_finite() {
            return Err(Error::Numerical(format!("log-integrand has no finite value on [{a}, {b}]")));
        }
        let r = self.integrate(&|x| (phi(x) - shift).exp(), a, b, focus)?;
        Ok(shift + r.value.ln())
    }

    /// `∫ₐᵇ f·exp(φ)`, rescaled by the sampled maximum of `φ`.
    ///
    /// The returned value is `exp(shift)·I` and may under- or overflow only
    /// when the true integral does.
    pub fn integrate_weighted<F, P>(&self, f: &F, phi: &P, a: f64, b: f64, focus: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
        P: Fn(f64) -> f64,
    {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let shift = sampled_max(phi, lo, hi, focus);
        if !shift.is_finite() {
            return Err(Error::Numerical(format!("log-weight has no finite value on [{lo}, {hi}]")));
        }
        let r = self.integrate(
            &|x| {
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * (phi(x) - shift).exp()
                }
            },
            a,
            b,
            focus,
        )?;
        if r.value == 0.0 {
            return Ok(0.0);
        }
        let log_abs = shift + r.value.abs().ln();
        Ok(r.value.signum() * log_abs.exp())
    }
}

/// Maximum of `φ` over a uniform sample of `[a, b]` together with the
/// endpoints and any focus points inside.
pub fn sampled_max<P: Fn(f64) -> f64>(phi: &P, a: f64, b: f64, focus: &[f64]) -> f64 {
    const SAMPLES: usize = 512;
    let mut m = phi(a).max(phi(b));
    for i in 1..SAMPLES {
        let x = a + (b - a) * i as f64 / SAMPLES as f64;
        m = m.max(phi(x));
    }
    for &c in focus {
        if c > a && c < b {
            m = m.max(phi(c));
        }
    }
    m
}

/// Splits `[a, b]` at the focus points and grades each piece
/// geometrically toward the focus points at its ends.
fn initial_panels(a: f64, b: f64, focus: &[f64], per_piece: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = focus.iter().copied().filter(|&c| c > a && c < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);
    let is_focus = |x: f64| focus.iter().any(|&c| c == x);

    let mut panels = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let grade_lo = is_focus(lo);
        let grade_hi = is_focus(hi);
        let pts = match (grade_lo, grade_hi) {
            (false, false) => (0..=per_piece)
                .map(|j| lo + (hi - lo) * j as f64 / per_piece as f64)
                .collect::<Vec<_>>(),
            (true, false) => graded(lo, hi, per_piece),
            (false, true) => {
                let mut p = graded(hi, lo, per_piece);
                p.reverse();
                p
            }
            (true, true) => {
                let mid = 0.5 * (lo + hi);
                let mut p = graded(lo, mid, per_piece.div_ceil(2));
                let mut q = graded(hi, mid, per_piece.div_ceil(2));
                q.reverse();
                p.pop();
                p.extend(q);
                p
            }
        };
        panels.extend(pts.windows(2).map(|p| (p[0], p[1])));
    }
    panels
}

/// Points from `from` to `to`, halving the panel width toward `from`.
fn graded(from: f64, to: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    let mut pts = vec![from];
    for j in (0..count).rev() {
        let frac = 0.5f64.powi(j as i32);
        pts.push(from + (to - from) * frac);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let (x, _) = gauss_legendre(16);
        for i in 0..16 {
            assert_eq!(x[i], -x[15 - i]);
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn adaptive_gaussian_peak() {
        let q = Quadrature::new(QuadratureSettings::default()).unwrap();
        let s = 0.01f64;
        let r = q.integrate(&|x: f64| (-(x - 1.0).powi(2) / (2.0 * s * s)).exp(), -3.0, 3.0, &[1.0]).unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(r.value, exact, max_relative = 1e-10);
    }

    #[test]
    fn log_domain_survives_underflow() {
        let q = Quadrature::new(QuadratureSettings::default()).unwrap();
        // ∫_0^1 e^{-2000 - x} = e^{-2000}(1 - e^{-1})
        let l = q.log_integrate_exp(&|x: f64| -2000.0 - x, 0.0, 1.0, &[]).unwrap();
        assert_relative_eq!(l, -2000.0 + (1.0 - (-1.0f64).exp()).ln(), max_relative = 1e-13);
    }

    #[test]
    fn weighted_odd_integrand_vanishes() {
        let q = Quadrature::new(QuadratureSettings::default()).unwrap();
        let v = q.integrate_weighted(&|x: f64| x, &|x: f64| -x * x * 50.0, -3.0, 3.0, &[0.0]).unwrap();
        assert!(v.abs() < 1e-14, "{v}");
    }

    #[test]
    fn reversed_and_empty_intervals() {
        let q = Quadrature::new(QuadratureSettings::default()).unwrap();
        let f = |x: f64| x.exp();
        let fwd = q.integrate(&f, 0.0, 1.0, &[]).unwrap().value;
        let bwd = q.integrate(&f, 1.0, 0.0, &[]).unwrap().value;
        assert_eq!(fwd, -bwd);
        assert_eq!(q.integrate(&f, 0.5, 0.5, &[]).unwrap().value, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let q = Quadrature::new(QuadratureSettings { max_depth: 2, ..Default::default() }).unwrap();
        let err = q.integrate(&|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[]).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }), "{err}");
    }

    #[test]
    fn panels_cover_interval() {
        let p = initial_panels(-3.0, 3.0, &[-1.0, 0.0, 1.0], 8);
        assert_eq!(p.first().unwrap().0, -3.0);
        assert_eq!(p.last().unwrap().1, 3.0);
        for w in p.windows(2) {
            assert_eq!(w[0].1, w[1].0);
            assert!(w[0].0 < w[0].1);
        }
    }

    #[test]
    fn settings_validation() {
        assert!(QuadratureSettings { nodes: 1, ..Default::default() }.validate().is_err());
        assert!(QuadratureSettings { tolerance: 0.0, ..Default::default() }.validate().is_err());
        assert!(QuadratureSettings { panels: 0, ..Default::default() }.validate().is_err());
        assert!(QuadratureSettings::default().validate().is_ok());
    }
}
