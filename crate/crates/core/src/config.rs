//! Run configuration: a TOML file with sections, overridable from the command line.
//!
//! ```toml
//! [potential]
//! name = "quartic"
//!
//! [run]
//! epsilons = [0.35, 0.3, 0.25]
//! u0 = 1.5
//! t_end = 2.0
//!
//! [grid]
//! n_base = 1200
//! grading = { kind = "graded", width = 0.3, refinement = 4.0 }
//!
//! [time]
//! dt = 1e-4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::LayerReference;
use crate::error::{Error, Result};
use crate::experiments::{check_epsilons, GridSettings, RunSettings};
use crate::fokker_planck::{build_grid, TimeControls};
use crate::potential::Potential;
use crate::quadrature::QuadratureSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub name: String,
    pub params: Vec<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            name: "quartic".into(),
            params: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub epsilons: Vec<f64>,
    pub alpha: f64,
    pub u0: f64,
    /// File of cell values of `u`, whitespace or comma separated.
    pub initial_profile: Option<PathBuf>,
    pub t_end: f64,
    pub seed: u64,
    pub competitors: usize,
    pub layer_reference: LayerReference,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.35, 0.3, 0.25],
            alpha: 0.5,
            u0: 1.5,
            initial_profile: None,
            t_end: 2.0,
            seed: 42,
            competitors: 50,
            layer_reference: LayerReference::Masses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSection,
    pub run: RunSection,
    pub grid: GridSettings,
    pub time: TimeControls,
    pub quadrature: QuadratureSettings,
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub potential: Option<String>,
    pub epsilons: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub u0: Option<f64>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.potential {
            self.potential.name = p.clone();
        }
        if let Some(e) = &o.epsilons {
            self.run.epsilons = e.clone();
        }
        if let Some(a) = o.alpha {
            self.run.alpha = a;
        }
        if let Some(u) = o.u0 {
            self.run.u0 = u;
        }
        if let Some(t) = o.t_end {
            self.run.t_end = t;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        Potential::from_name(&self.potential.name, &self.potential.params)
    }

    /// Checks every precondition a run depends on and builds the settings.
    pub fn settings(&self) -> Result<RunSettings> {
        let potential = self.potential()?;
        check_epsilons(&self.run.epsilons)?;
        let custom_initial = match &self.run.initial_profile {
            Some(p) => Some(read_profile(p)?),
            None => None,
        };
        let settings = RunSettings {
            potential,
            alpha: self.run.alpha,
            u0: self.run.u0,
            custom_initial,
            t_end: self.run.t_end,
            grid: self.grid,
            controls: self.time,
            quadrature: self.quadrature,
            layer_reference: self.run.layer_reference,
            seed: self.run.seed,
            competitors: self.run.competitors,
        };
        settings.validate()?;
        build_grid(self.grid.half_width, self.grid.n_base, self.grid.grading)?;
        Ok(settings)
    }
}

pub fn parse_epsilon_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad ε value {t:?}: {e}")))
        })
        .collect()
}

pub fn read_profile(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read initial profile {}: {e}", path.display())))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad profile value {t:?}: {e}")))
        })
        .collect()
}
