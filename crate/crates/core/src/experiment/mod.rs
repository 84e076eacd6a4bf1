//! Configuration-driven parameter sweeps over (σ_S², ρ, λ, sender mode).

mod output;
pub mod plot;
mod sweep;

pub use output::{
    artifact_path, emit_outputs, format_sig, read_results_csv, render_plots, write_results_csv,
    CSV_HEADER,
};
pub use sweep::{design_point, run_sweep, PointArtifact, SweepRow, SweepTable};

use crate::design::DescentConfig;
use crate::error::{Error, Result};
use crate::nonstrategic::LloydConfig;
use crate::source::GridSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// The four populations compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SenderMode {
    /// Every sender is honest.
    #[serde(rename = "S_n")]
    NonStrategic,
    /// Every sender is fully rational with full information.
    #[serde(rename = "S_f")]
    FullInfo,
    /// The three-type cognitive hierarchy mixed by the Poisson pmf.
    #[serde(rename = "S_b")]
    BoundedRational,
    /// Every sender uses the level-1 classifier.
    #[serde(rename = "S_p")]
    PartiallyStrategic,
}

impl SenderMode {
    pub const ALL: [SenderMode; 4] = [
        SenderMode::NonStrategic,
        SenderMode::FullInfo,
        SenderMode::BoundedRational,
        SenderMode::PartiallyStrategic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SenderMode::NonStrategic => "S_n",
            SenderMode::FullInfo => "S_f",
            SenderMode::BoundedRational => "S_b",
            SenderMode::PartiallyStrategic => "S_p",
        }
    }
}

impl fmt::Display for SenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SenderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SenderMode::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sender mode {s:?}")))
    }
}

/// `n` log-spaced points from `lo` to `hi`, endpoints exact.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

pub fn default_lambda_list() -> Vec<f64> {
    log_spaced(0.001, 700.0, 25)
}

/// A full experiment description. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of messages.
    #[serde(rename = "M")]
    pub num_cells: usize,
    pub sigma_s2_list: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub lambda_list: Vec<f64>,
    pub sender_modes: Vec<SenderMode>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub descent: DescentConfig,
    pub lloyd: LloydConfig,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_cells: 4,
            sigma_s2_list: vec![0.1, 1.0, 1.5],
            rho_list: vec![0.1, 0.5, 0.7],
            lambda_list: default_lambda_list(),
            sender_modes: SenderMode::ALL.to_vec(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            descent: DescentConfig::default(),
            lloyd: LloydConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub modes: Option<Vec<SenderMode>>,
    pub seed: Option<u64>,
    pub num_cells: Option<usize>,
    pub grid_panels: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(m) = &o.modes {
            self.sender_modes = m.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.num_cells {
            self.num_cells = m;
        }
        if let Some(p) = o.grid_panels {
            self.grid.x_panels = p;
        }
    }

    /// Checks ranges and fills in the derived fields.
    pub fn resolve(mut self) -> Result<Self> {
        self.validate()?;
        self.descent.seed = self.seed;
        self.lloyd.seed = self.seed;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if self.sender_modes.is_empty() {
            return Err(Error::Config("sender_modes must not be empty".into()));
        }
        let mut seen = Vec::new();
        for m in &self.sender_modes {
            if seen.contains(m) {
                return Err(Error::Config(format!("sender mode {m} listed twice")));
            }
            seen.push(*m);
        }
        check_list("sigma_s2_list", &self.sigma_s2_list, |v| v > 0.0)?;
        check_list("rho_list", &self.rho_list, |v| (0.0..1.0).contains(&v))?;
        check_list("lambda_list", &self.lambda_list, |v| v > 0.0)?;
        self.descent.validate()?;
        if self.lloyd.num_inits == 0 {
            return Err(Error::Config("lloyd.num_inits must be at least 1".into()));
        }
        self.grid
            .validate()
            .map_err(|e| Error::Config(format!("grid: {e}")))?;
        Ok(())
    }
}

fn check_list(name: &str, values: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || !ok(**v)) {
        return Err(Error::Config(format!(
            "{name} contains out-of-range value {v}"
        )));
    }
    Ok(())
}
