//! The two-state limit: `u̇ = −k(u − 1)` as a gradient flow of the mixing
//! entropy with respect to the metric `g_u`.

use rand::Rng;
use serde::Serialize;

use crate::asymptotics::{check_mass_fraction, RateConstant, CONTINUITY_CUTOFF};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitState {
    pub u: f64,
    pub rate: RateConstant,
}

impl LimitState {
    pub fn new(u: f64, rate: RateConstant) -> Result<Self> {
        check_mass_fraction(u)?;
        Ok(Self { u, rate })
    }

    pub fn u_minus(&self) -> f64 {
        2.0 - self.u
    }
}

/// `u(t) = 1 + (u₀ − 1) e^{−kt}`.
pub fn limit_solution(u0: f64, k: f64, t: f64) -> Result<f64> {
    check_mass_fraction(u0)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(1.0 + (u0 - 1.0) * (-k * t).exp())
}

/// `u̇(t)` along the closed-form solution.
pub fn limit_velocity(u0: f64, k: f64, t: f64) -> Result<f64> {
    Ok(-k * (limit_solution(u0, k, t)? - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitEnergy {
    pub energy: f64,
    /// Coefficient of `v` in `DE(u)v`.
    pub de_per_v: f64,
}

/// `E(u) = ½(u ln u + (2−u) ln(2−u))` and `dE = ½ ln(u/(2−u))`.
pub fn limit_energy(u: f64) -> Result<LimitEnergy> {
    check_mass_fraction(u)?;
    let w = 2.0 - u;
    Ok(LimitEnergy {
        energy: 0.5 * (u * u.ln() + w * w.ln()),
        de_per_v: 0.5 * (u / w).ln(),
    })
}

/// `g_u(v, v) = v² ln(u/(2−u)) / (2k(u−1))`, continuous at `u = 1`.
pub fn limit_metric(k: f64, u: f64, v: f64) -> Result<f64> {
    check_mass_fraction(u)?;
    let d = u - 1.0;
    if d.abs() < CONTINUITY_CUTOFF {
        return Ok(v * v / k);
    }
    Ok(v * v * (u / (2.0 - u)).ln() / (2.0 * k * d))
}

/// Composite Gauss–Legendre rule in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeQuadrature {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self { panels: 256, nodes: 8 }
    }
}

impl TimeQuadrature {
    pub fn integrate<F: FnMut(f64) -> Result<f64>>(&self, mut f: F, t_end: f64) -> Result<f64> {
        if self.panels == 0 || self.nodes == 0 {
            return Err(Error::Config("time quadrature needs panels and nodes".into()));
        }
        let (x, w) = gauss_legendre(self.nodes);
        let h = t_end / self.panels as f64;
        let mut s = 0.0;
        for p in 0..self.panels {
            let mid = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                s += wi * f(mid + 0.5 * h * xi)?;
            }
        }
        Ok(0.5 * h * s)
    }
}

/// `∫₀ᵀ ½ g_{u(t)}(v, v) + DE(u(t)) v dt`.
pub fn limit_rayleigh<U, V>(k: f64, u_path: U, v_path: V, t_end: f64, quad: &TimeQuadrature) -> Result<f64>
where
    U: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    if !(t_end >= 0.0) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {t_end}")));
    }
    quad.integrate(
        |t| {
            let u = u_path(t);
            let v = v_path(t);
            Ok(0.5 * limit_metric(k, u, v)? + limit_energy(u)?.de_per_v * v)
        },
        t_end,
    )
}

/// Piecewise-constant velocity with values in `[-amplitude, amplitude]` on
/// `pieces` equal subintervals of `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub t_end: f64,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn random<R: Rng>(rng: &mut R, t_end: f64, pieces: usize, amplitude: f64) -> Self {
        Self {
            t_end,
            values: (0..pieces).map(|_| rng.random_range(-amplitude..=amplitude)).collect(),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let n = self.values.len();
        let i = ((t / self.t_end) * n as f64).floor() as isize;
        self.values[i.clamp(0, n as isize - 1) as usize]
    }
}
