use serde::Serialize;

use super::grid::Grid;
use super::tridiag::solve_tridiagonal;
use crate::error::{Error, Result};
use crate::measure::EpsilonContext;
use crate::quadrature::gauss_legendre;

const CELL_NODES: usize = 16;

/// Finite-volume form of `u ↦ (τ γ)⁻¹ ∂ₓ(γ ∂ₓ u)` with zero-flux ends.
///
/// All couplings are assembled from differences of logarithms, so cells in
/// the far field where `γ` underflows still couple with finite weights.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteOperator {
    pub size: usize,
    pub tau: f64,
    pub log_tau: f64,
    /// `ln ∫_cell γ`.
    pub log_mass: Vec<f64>,
    /// `∫_cell γ`; zero where it underflows.
    pub mass: Vec<f64>,
    /// `ln γ_i = ln(∫_cell γ / w_i)`.
    pub log_gamma_cell: Vec<f64>,
    /// Geometric-mean face values `ln γ_{i+1/2}`.
    pub log_gamma_face: Vec<f64>,
    pub face_spacing: Vec<f64>,
    /// Coupling of cell `j` to `j + 1`.
    pub right: Vec<f64>,
    /// Coupling of cell `j + 1` to `j`.
    pub left: Vec<f64>,
}

pub fn assemble_operator(ctx: &EpsilonContext, grid: &Grid) -> Result<DiscreteOperator> {
    let l = grid.half_width();
    if l > ctx.truncation * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "grid half-width {l} exceeds the truncated domain {}",
            ctx.truncation
        )));
    }
    let n = grid.size;
    let (nodes, weights) = gauss_legendre(CELL_NODES);
    let mut log_mass = Vec::with_capacity(n);
    let mut phi = [0.0; CELL_NODES];
    for i in 0..n {
        let c = grid.cell_centers[i];
        let half = 0.5 * grid.cell_widths[i];
        for (p, x) in phi.iter_mut().zip(&nodes) {
            *p = ctx.log_gamma_at(c + half * x);
        }
        let top = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = phi.iter().zip(&weights).map(|(p, w)| w * (p - top).exp()).sum();
        log_mass.push(top + (s * half).ln());
    }
    // Exact mirror symmetry of the discrete weights.
    for i in 0..n / 2 {
        log_mass[n - 1 - i] = log_mass[i];
    }
    let log_gamma_cell: Vec<f64> = log_mass
        .iter()
        .zip(&grid.cell_widths)
        .map(|(m, w)| m - w.ln())
        .collect();
    let log_gamma_face: Vec<f64> = log_gamma_cell.windows(2).map(|g| 0.5 * (g[0] + g[1])).collect();
    let face_spacing: Vec<f64> = (0..n - 1).map(|j| grid.face_spacing(j)).collect();
    let log_tau = ctx.log_tau;
    let mut right = Vec::with_capacity(n - 1);
    let mut left = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let base = log_gamma_face[j] - log_tau - face_spacing[j].ln();
        right.push((base - log_gamma_cell[j] - grid.cell_widths[j].ln()).exp());
        left.push((base - log_gamma_cell[j + 1] - grid.cell_widths[j + 1].ln()).exp());
    }
    if right.iter().chain(&left).any(|a| !a.is_finite()) {
        return Err(Error::Numerical("operator couplings overflow; reduce the domain or raise epsilon".into()));
    }
    Ok(DiscreteOperator {
        size: n,
        tau: ctx.tau,
        log_tau,
        mass: log_mass.iter().map(|m| m.exp()).collect(),
        log_mass,
        log_gamma_cell,
        log_gamma_face,
        face_spacing,
        right,
        left,
    })
}

impl DiscreteOperator {
    /// `out = A u`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.size;
        out[..n].fill(0.0);
        for j in 0..n - 1 {
            let d = u[j + 1] - u[j];
            out[j] += self.right[j] * d;
            out[j + 1] -= self.left[j] * d;
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.apply_into(u, &mut out);
        out
    }

    /// Row-sum norm `‖A‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.size)
            .map(|i| {
                let r = if i + 1 < self.size { self.right[i] } else { 0.0 };
                let l = if i > 0 { self.left[i - 1] } else { 0.0 };
                2.0 * (r + l)
            })
            .fold(0.0, f64::max)
    }

    /// `⟨u, v⟩ = Σ γ_i u_i v_i w_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn total_mass(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).map(|(m, a)| m * a).sum()
    }

    /// `Σ γ_f (Δu)²/h_f · e^{shift}`, assembled term by term in the log domain.
    pub fn dirichlet_scaled(&self, u: &[f64], log_shift: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..self.size - 1 {
            let d = u[j + 1] - u[j];
            if d != 0.0 {
                s += (self.log_gamma_face[j] + log_shift + 2.0 * d.abs().ln() - self.face_spacing[j].ln()).exp();
            }
        }
        s
    }

    /// `D(u) = Σ γ_f (Δu)²/h_f`.
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.dirichlet_scaled(u, 0.0)
    }

    fn implicit_matrix(&self, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.size;
        let mut diag = vec![1.0; n];
        for j in 0..n - 1 {
            diag[j] += s * self.right[j];
            diag[j + 1] += s * self.left[j];
        }
        let upper: Vec<f64> = self.right.iter().map(|a| -s * a).collect();
        let lower: Vec<f64> = self.left.iter().map(|a| -s * a).collect();
        (lower, diag, upper)
    }

    /// Increment `u_new − u_old` of one θ-step.
    ///
    /// Solving for the increment keeps the right-hand side `dt A u` small
    /// along smooth solutions, so the increment carries full relative
    /// precision; the residual mass defect of the elimination is removed by
    /// a constant shift, which lies in the kernel of `A`.
    pub fn increment(&self, u: &[f64], dt: f64, theta: f64) -> Result<Vec<f64>> {
        check_step(dt, theta)?;
        let mut rhs = self.apply(u);
        rhs.iter_mut().for_each(|r| *r *= dt);
        let (lower, diag, upper) = self.implicit_matrix(theta * dt);
        let mut delta = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        let defect = self.total_mass(&delta);
        if defect != 0.0 {
            let shift = defect / self.mass.iter().sum::<f64>();
            delta.iter_mut().for_each(|d| *d -= shift);
        }
        Ok(delta)
    }

    /// `u_new` from `(I − θ dt A) u_new = (I + (1−θ) dt A) u_old`.
    ///
    /// For `θ = 1` the matrix is an M-matrix and elimination without
    /// pivoting keeps the lower bound exactly in floating point.
    pub fn solve_step(&self, u: &[f64], dt: f64, theta: f64) -> Result<Vec<f64>> {
        check_step(dt, theta)?;
        // Shifting by the minimum keeps the right-hand side nonnegative for
        // θ = 1 and leaves constants exactly in the kernel.
        let floor = u.iter().copied().fold(f64::INFINITY, f64::min);
        let mut rhs: Vec<f64> = u.iter().map(|a| a - floor).collect();
        if theta < 1.0 {
            let au = self.apply(u);
            rhs.iter_mut().zip(&au).for_each(|(r, b)| *r += (1.0 - theta) * dt * b);
        }
        let (lower, diag, upper) = self.implicit_matrix(theta * dt);
        let w = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        Ok(w.iter().map(|w| floor + w).collect())
    }

    /// Discrete transition layer at the cell centers: the face sums of
    /// `h τ/γ_f` from the origin, normalised to `±1` at `x = ±1`.
    ///
    /// Values overflow to `±∞` in the far field, where the continuous
    /// profile is equally unrepresentable.
    pub fn transition_layer(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = self.size;
        let z = grid.zero_cell();
        let log_inc = |j: usize| self.face_spacing[j].ln() + self.log_tau - self.log_gamma_face[j];
        let mut log_s = vec![f64::NEG_INFINITY; n];
        let mut acc = log_inc(z - 1) - std::f64::consts::LN_2;
        log_s[z] = acc;
        for i in z + 1..n {
            acc = log_add(acc, log_inc(i - 1));
            log_s[i] = acc;
        }
        let hi = grid.cell_centers.iter().position(|&c| c > 1.0).ok_or_else(|| {
            Error::Config("grid does not extend beyond the well at x = 1".into())
        })?;
        let lo = hi - 1;
        if lo < z {
            return Err(Error::Config("grid is too coarse to locate the well".into()));
        }
        let (c0, c1) = (grid.cell_centers[lo], grid.cell_centers[hi]);
        let (s0, s1) = (log_s[lo].exp(), log_s[hi].exp());
        let at_one = s0 + (s1 - s0) * (1.0 - c0) / (c1 - c0);
        if !(at_one > 0.0 && at_one.is_finite()) {
            return Err(Error::Numerical(format!("transition layer normalisation {at_one}")));
        }
        let log_norm = at_one.ln();
        let mut eta = vec![0.0; n];
        for i in z..n {
            let e = (log_s[i] - log_norm).exp();
            eta[i] = e;
            eta[n - 1 - i] = -e;
        }
        Ok(eta)
    }
}

fn check_step(dt: f64, theta: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Numerical(format!("time step must be positive, got {dt}")));
    }
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [1/2, 1], got {theta}")));
    }
    Ok(())
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
