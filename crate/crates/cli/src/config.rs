//! JSON experiment configuration.
//!
//! Every key is optional; missing keys take the defaults below and unknown
//! keys are rejected. The resolved config is echoed next to every run's
//! outputs and reproduces the run when fed back in.

use nmr_reservoir::linalg::Tolerance;
use nmr_reservoir::readout::{NoiseSpec, ReadoutConfig, DEFAULT_COPIES, DEFAULT_RELATIVE_STD};
use nmr_reservoir::reservoir::{
    RotationAxis, SequenceParams, SpinSystem, DEFAULT_COUPLING_RANGE_HZ, DEFAULT_COUPLING_SEED,
    DEFAULT_EPSILON, DEFAULT_INPUT_LENGTH, DEFAULT_INPUT_SPINS, DEFAULT_SAMPLES_PER_INPUT,
    DEFAULT_SAMPLE_INTERVAL,
};
use nmr_reservoir::tasks::{
    expand_task_name, table_battery, BenchmarkSettings, Scheme, TaskSpec, DEFAULT_GRID_STEP,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config {path}: {message}")]
pub struct ConfigError {
    /// Dotted key path, or `<root>` for whole-document problems.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Thermal polarization.
    pub epsilon: f64,
    /// Evolution time between probe samples.
    pub tau_seconds: f64,
    /// Inputs per binary stream.
    pub input_length: usize,
    /// Probe samples per input.
    pub samples_per_input: usize,
    pub rotation_axis: RotationAxis,
    /// Task name, or the family names `recognition` / `parity`.
    pub task: String,
    /// Run the full battery instead of `task`.
    pub all: bool,
    /// Overrides each task's default scheme.
    pub scheme: Option<Scheme>,
    /// Sample counts to evaluate; empty means `[samples_per_input]`.
    pub sweep_m: Vec<usize>,
    pub noise: NoiseConfig,
    /// Relative std of simulated measurement noise; defaults to
    /// `noise.relative_std`.
    pub measurement_noise: Option<f64>,
    pub readout: ReadoutSection,
    /// Grid increment for function-task inputs.
    pub grid_step: f64,
    /// Global seed: measurement noise, and augmentation unless
    /// `noise.seed` is set.
    pub seed: u64,
    /// Output directory.
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub input_spins: usize,
    pub coupling_seed: u64,
    /// Magnitude range of seeded couplings, Hz.
    pub coupling_range_hz: [f64; 2],
    /// Explicit couplings; when present the seed is ignored.
    pub couplings: Option<Couplings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    /// Input-to-probe couplings `d_iC`, Hz.
    pub probe_hz: Vec<f64>,
    /// Input-input couplings `d_ij` for `i < j`, row-major upper triangle, Hz.
    #[serde(default)]
    pub pairs_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub copies: usize,
    pub relative_std: f64,
    /// Defaults to the global seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub bias: bool,
    /// Absolute singular-value cutoff; `null` selects the automatic one.
    pub tolerance: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            epsilon: DEFAULT_EPSILON,
            tau_seconds: DEFAULT_SAMPLE_INTERVAL,
            input_length: DEFAULT_INPUT_LENGTH,
            samples_per_input: DEFAULT_SAMPLES_PER_INPUT,
            rotation_axis: RotationAxis::default(),
            task: "recognition".into(),
            all: false,
            scheme: None,
            sweep_m: Vec::new(),
            noise: NoiseConfig::default(),
            measurement_noise: None,
            readout: ReadoutSection::default(),
            grid_step: DEFAULT_GRID_STEP,
            seed: 0,
            out: "out".into(),
        }
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            input_spins: DEFAULT_INPUT_SPINS,
            coupling_seed: DEFAULT_COUPLING_SEED,
            coupling_range_hz: [DEFAULT_COUPLING_RANGE_HZ.0, DEFAULT_COUPLING_RANGE_HZ.1],
            couplings: None,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            copies: DEFAULT_COPIES,
            relative_std: DEFAULT_RELATIVE_STD,
            seed: None,
        }
    }
}

fn path_string(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." {
        "<root>".into()
    } else {
        s
    }
}

/// Parses and validates a JSON document. An empty or all-whitespace
/// document is the default experiment.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = if text.trim().is_empty() {
        ExperimentConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::at(&path_string(e.path()), e.inner().to_string()))?;
        cfg
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a config as pretty JSON with a trailing newline.
pub fn to_json(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config is always serializable");
    s.push('\n');
    s
}

/// Reads a config file. I/O failures are returned separately from
/// validation failures so callers can map them to different exit codes.
pub fn parse_config(path: &Path) -> Result<Result<ExperimentConfig, ConfigError>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config_str(&text))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let system = self.spin_system()?;
        let bound = system.polarization_bound();
        if !(self.epsilon.is_finite() && self.epsilon.abs() < bound) {
            return Err(ConfigError::at(
                "epsilon",
                format!(
                    "{} violates the positivity bound |epsilon| < {bound} for {} input spins",
                    self.epsilon,
                    system.n_input_spins()
                ),
            ));
        }
        if !(self.tau_seconds.is_finite() && self.tau_seconds > 0.0) {
            return Err(ConfigError::at("tau_seconds", "must be positive"));
        }
        if self.input_length == 0 {
            return Err(ConfigError::at("input_length", "must be >= 1"));
        }
        if self.input_length > 16 {
            return Err(ConfigError::at(
                "input_length",
                "must be <= 16 (2^L streams are simulated)",
            ));
        }
        if self.samples_per_input == 0 {
            return Err(ConfigError::at("samples_per_input", "must be >= 1"));
        }
        if let Some(&m) = self
            .sweep_m
            .iter()
            .find(|&&m| m == 0 || m > self.samples_per_input)
        {
            return Err(ConfigError::at(
                "sweep_m",
                format!("M = {m} outside 1..={}", self.samples_per_input),
            ));
        }
        if self.noise.copies == 0 {
            return Err(ConfigError::at("noise.copies", "must be >= 1"));
        }
        if !(self.noise.relative_std.is_finite() && self.noise.relative_std >= 0.0) {
            return Err(ConfigError::at("noise.relative_std", "must be >= 0"));
        }
        if let Some(m) = self.measurement_noise {
            if !(m.is_finite() && m >= 0.0) {
                return Err(ConfigError::at("measurement_noise", "must be >= 0"));
            }
        }
        if let Some(t) = self.readout.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::at("readout.tolerance", "must be >= 0"));
            }
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(ConfigError::at("grid_step", "must be in (0, 1]"));
        }
        self.tasks()?;
        Ok(())
    }

    pub fn spin_system(&self) -> Result<SpinSystem, ConfigError> {
        let sys = &self.system;
        match &sys.couplings {
            Some(c) => {
                if c.probe_hz.len() != sys.input_spins {
                    return Err(ConfigError::at(
                        "system.couplings.probe_hz",
                        format!(
                            "{} entries for {} input spins",
                            c.probe_hz.len(),
                            sys.input_spins
                        ),
                    ));
                }
                SpinSystem::new(c.probe_hz.clone(), c.pairs_hz.clone())
                    .map_err(|e| ConfigError::at("system.couplings", e.to_string()))
            }
            None => {
                let [lo, hi] = sys.coupling_range_hz;
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                    return Err(ConfigError::at(
                        "system.coupling_range_hz",
                        "must satisfy 0 <= low <= high",
                    ));
                }
                SpinSystem::random(sys.input_spins, sys.coupling_seed, (lo, hi))
                    .map_err(|e| ConfigError::at("system.input_spins", e.to_string()))
            }
        }
    }

    pub fn sequence_params(&self) -> SequenceParams {
        SequenceParams {
            input_length: self.input_length,
            samples_per_input: self.samples_per_input,
            sample_interval: self.tau_seconds,
            rotation_axis: self.rotation_axis,
        }
    }

    /// Tasks selected by `all` / `task` / `scheme`.
    pub fn tasks(&self) -> Result<Vec<TaskSpec>, ConfigError> {
        if self.all {
            let battery = table_battery();
            for t in &battery {
                t.validate_for(self.input_length)
                    .map_err(|e| ConfigError::at("input_length", e.to_string()))?;
            }
            return Ok(match self.scheme {
                Some(s) => battery
                    .into_iter()
                    .map(|t| TaskSpec { scheme: s, ..t })
                    .collect(),
                None => battery,
            });
        }
        expand_task_name(&self.task, self.scheme, self.input_length)
            .map_err(|e| ConfigError::at("task", e.to_string()))
    }

    /// Sample counts to evaluate.
    pub fn m_values(&self) -> Vec<usize> {
        if self.sweep_m.is_empty() {
            vec![self.samples_per_input]
        } else {
            self.sweep_m.clone()
        }
    }

    pub fn benchmark_settings(&self) -> Result<BenchmarkSettings, ConfigError> {
        Ok(BenchmarkSettings {
            system: self.spin_system()?,
            epsilon: self.epsilon,
            params: self.sequence_params(),
            noise: NoiseSpec {
                copies: self.noise.copies,
                relative_std: self.noise.relative_std,
                seed: self.noise.seed.unwrap_or(self.seed),
            },
            readout: ReadoutConfig {
                tolerance: self
                    .readout
                    .tolerance
                    .map_or(Tolerance::Auto, Tolerance::Absolute),
                bias: self.readout.bias,
            },
            measurement_noise: self.measurement_noise.unwrap_or(self.noise.relative_std),
            seed: self.seed,
            grid_step: self.grid_step,
        })
    }
}
