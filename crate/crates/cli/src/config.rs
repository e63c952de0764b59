//! Experiment configuration: JSON file merged with command-line overrides;
//! unknown keys are rejected and every run writes its resolved copy next to
//! its outputs.

use serde::{Deserialize, Serialize};

use cdekit::control::Scheme;
use cdekit::neuralcde::{ModelConfig, Task, TrainConfig};
use cdekit::solver::{Method, SolveConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_series: usize,
    pub length: usize,
    pub channels: usize,
    pub missing_fraction: f64,
    pub intensity: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_series: 200,
            length: 30,
            channels: 2,
            missing_fraction: 0.3,
            intensity: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub fixed_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let base = SolveConfig::default();
        Self {
            method: base.method,
            rtol: base.rtol,
            atol: base.atol,
            fixed_step: base.fixed_step,
        }
    }
}

impl SolverSettings {
    pub fn to_solve_config(&self) -> SolveConfig {
        SolveConfig {
            method: self.method,
            rtol: self.rtol,
            atol: self.atol,
            fixed_step: self.fixed_step,
            ..SolveConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub termination_patience: usize,
    pub task: Task,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            learning_rate: base.learning_rate,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            plateau_patience: base.plateau_patience,
            termination_patience: base.termination_patience,
            task: base.task,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            plateau_patience: self.plateau_patience,
            termination_patience: self.termination_patience,
            task: self.task,
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Everything a run needs; command-line flags override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scheme: Option<Scheme>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub solver: SolverSettings,
    pub train: TrainSettings,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> cdekit::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
