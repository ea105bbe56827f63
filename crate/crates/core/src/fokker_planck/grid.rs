use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How cells are distributed over `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradingSpec {
    Uniform,
    /// Cell density `1 + r·exp(-((|x| − c)/w)²)` around `c ∈ {0, 1}`.
    Graded { width: f64, refinement: f64 },
    /// Graded with the refinement raised until the cells at the barrier are
    /// no wider than `ε²`.
    EpsilonAware { epsilon: f64 },
}

impl Default for GradingSpec {
    fn default() -> Self {
        GradingSpec::Graded {
            width: DEFAULT_WIDTH,
            refinement: DEFAULT_REFINEMENT,
        }
    }
}

const DEFAULT_WIDTH: f64 = 0.3;
const DEFAULT_REFINEMENT: f64 = 4.0;
const DENSITY_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub cell_centers: Vec<f64>,
    pub cell_widths: Vec<f64>,
    pub face_positions: Vec<f64>,
    pub size: usize,
}

impl Grid {
    pub fn half_width(&self) -> f64 {
        *self.face_positions.last().expect("grid has faces")
    }

    /// Distance between the centers on either side of interior face `j`
    /// (between cells `j` and `j + 1`).
    #[inline]
    pub fn face_spacing(&self, j: usize) -> f64 {
        self.cell_centers[j + 1] - self.cell_centers[j]
    }

    /// Index of the first cell right of the origin; the face at `x = 0`
    /// sits between cells `zero_cell() − 1` and `zero_cell()`.
    pub fn zero_cell(&self) -> usize {
        self.size / 2
    }

    pub fn min_width(&self) -> f64 {
        self.cell_widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest cell width within `radius` of the point `x`.
    pub fn min_width_near(&self, x: f64, radius: f64) -> f64 {
        self.cell_centers
            .iter()
            .zip(&self.cell_widths)
            .filter(|(c, _)| (*c - x).abs() <= radius)
            .map(|(_, w)| *w)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn build_grid(l: f64, n_base: usize, grading: GradingSpec) -> Result<Grid> {
    if !(l >= 2.5) || !l.is_finite() {
        return Err(Error::Config(format!("domain half-width must be at least 2.5, got {l}")));
    }
    if n_base < 200 {
        return Err(Error::Config(format!("grid needs at least 200 cells, got {n_base}")));
    }
    if n_base % 2 == 1 {
        return Err(Error::Config(format!("grid size must be even to place a face at 0, got {n_base}")));
    }
    match grading {
        GradingSpec::Uniform => Ok(from_density(l, n_base, 0.3, 0.0)),
        GradingSpec::Graded { width, refinement } => {
            check_grading(width, refinement)?;
            Ok(from_density(l, n_base, width, refinement))
        }
        GradingSpec::EpsilonAware { epsilon } => {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::Config(format!("grading epsilon must lie in (0, 1), got {epsilon}")));
            }
            let target = epsilon * epsilon;
            let mut refinement = DEFAULT_REFINEMENT;
            loop {
                let g = from_density(l, n_base, DEFAULT_WIDTH, refinement);
                if g.min_width_near(0.0, epsilon) <= target {
                    return Ok(g);
                }
                refinement *= 2.0;
                if refinement > 1e6 {
                    return Err(Error::Config(format!(
                        "cannot resolve the barrier to width {target} with {n_base} cells"
                    )));
                }
            }
        }
    }
}

fn check_grading(width: f64, refinement: f64) -> Result<()> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Config(format!("grading width must be positive, got {width}")));
    }
    if !(refinement >= 0.0 && refinement.is_finite()) {
        return Err(Error::Config(format!("grading refinement must be nonnegative, got {refinement}")));
    }
    Ok(())
}

/// Equidistributes the density on `[0, L]` and mirrors it, so the grid is
/// exactly symmetric with a face at the origin.
fn from_density(l: f64, n: usize, width: f64, refinement: f64) -> Grid {
    let density = |x: f64| {
        let bump = |c: f64| (-((x - c) / width).powi(2)).exp();
        1.0 + refinement * bump(0.0).max(bump(1.0))
    };
    let xs: Vec<f64> = (0..=DENSITY_SAMPLES)
        .map(|i| l * i as f64 / DENSITY_SAMPLES as f64)
        .collect();
    let mut cum = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * (density(xs[i]) + density(xs[i - 1])) * (xs[i] - xs[i - 1]);
    }
    let total = cum[DENSITY_SAMPLES];
    let half = n / 2;
    let mut right = Vec::with_capacity(half + 1);
    right.push(0.0);
    let mut k = 0;
    for j in 1..half {
        let level = total * j as f64 / half as f64;
        while cum[k + 1] < level {
            k += 1;
        }
        let frac = (level - cum[k]) / (cum[k + 1] - cum[k]);
        right.push(xs[k] + frac * (xs[k + 1] - xs[k]));
    }
    right.push(l);

    let mut faces: Vec<f64> = right.iter().rev().map(|x| -x).collect();
    faces.extend_from_slice(&right[1..]);
    let cell_centers: Vec<f64> = faces.windows(2).map(|f| 0.5 * (f[0] + f[1])).collect();
    let cell_widths: Vec<f64> = faces.windows(2).map(|f| f[1] - f[0]).collect();
    Grid {
        size: cell_centers.len(),
        cell_centers,
        cell_widths,
        face_positions: faces,
    }
}
