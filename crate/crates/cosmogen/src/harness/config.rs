//! Experiment configuration: one structured TOML file with documented
//! defaults; CLI flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clock::ClockParams;
use crate::fock::ModelParams;
use crate::noise::Scheme;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Energy per volume unit.
    pub epsilon: f64,
    /// Growth coupling.
    pub g: f64,
    /// Collapse rate; 0 disables collapse.
    pub lambda: f64,
    /// Fock truncation; absent means sized automatically from the predicted
    /// growth and doubled until the leakage threshold holds.
    pub n_max: Option<usize>,
    /// Number of instants of the discrete construction (used by the exact
    /// instant table; the trajectory length is steps × dt).
    pub k_max: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            epsilon: 1.0,
            g: 0.5,
            lambda: 2.0,
            n_max: None,
            k_max: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    pub epsilon_p: f64,
    pub g_p: f64,
    pub lambda_p: f64,
    pub n_max: Option<usize>,
}

impl Default for ClockSection {
    fn default() -> Self {
        ClockSection {
            epsilon_p: 1.0,
            g_p: 0.5,
            lambda_p: 2.0,
            n_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scheme: Scheme,
    pub n_trajectories: usize,
    pub steps: usize,
    pub dt: f64,
    /// Master seed; per-trajectory streams are derived from it.
    pub seed: u64,
    /// Record every this many steps; 0 picks a divisor of steps targeting
    /// ~50 recorded points.
    pub record_stride: usize,
    pub out_dir: PathBuf,
    /// How many leading trajectories get a full CSV dump.
    pub dump_trajectories: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scheme: Scheme::Physical,
            n_trajectories: 1000,
            steps: 2500,
            dt: 0.01,
            seed: 20240,
            record_stride: 0,
            out_dir: PathBuf::from("out"),
            dump_trajectories: 1,
        }
    }
}

/// Full experiment description. Every field has a default; an empty file is
/// a valid configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    /// Present only for joint space+clock runs.
    pub clock: Option<ClockSection>,
    pub run: RunSection,
}

/// Flag-level overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_trajectories: Option<usize>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub scheme: Option<Scheme>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(n) = o.n_trajectories {
            self.run.n_trajectories = n;
        }
        if let Some(steps) = o.steps {
            self.run.steps = steps;
        }
        if let Some(dt) = o.dt {
            self.run.dt = dt;
        }
        if let Some(scheme) = o.scheme {
            self.run.scheme = scheme;
        }
        if let Some(dir) = &o.out_dir {
            self.run.out_dir = dir.clone();
        }
    }

    /// Effective record stride: the configured value, or the smallest
    /// divisor of steps giving at most ~50 recorded points.
    pub fn effective_stride(&self) -> usize {
        if self.run.record_stride != 0 {
            return self.run.record_stride;
        }
        auto_stride(self.run.steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.n_trajectories < 1 {
            return Err(Error::Config("n_trajectories must be >= 1".into()));
        }
        if self.run.steps < 1 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(self.run.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        let stride = self.effective_stride();
        if self.run.steps % stride != 0 {
            return Err(Error::Config(format!(
                "record_stride {} must divide steps {}",
                stride, self.run.steps
            )));
        }
        // Model constants validate against a placeholder truncation; the
        // actual n_max may be sized later.
        ModelParams::new(
            self.model.epsilon,
            self.model.g,
            self.model.lambda,
            self.model.k_max,
            self.model.n_max.unwrap_or(16),
        )?;
        if let Some(c) = &self.clock {
            ClockParams::new(c.epsilon_p, c.g_p, c.lambda_p)?;
        }
        Ok(())
    }
}

pub fn auto_stride(steps: usize) -> usize {
    let target = steps.div_ceil(50);
    (target..=steps).find(|d| steps % d == 0).unwrap_or(1)
}
