//! Experiment configuration: a JSON file layered over a named preset.
//!
//! Every key missing from the file is filled from the preset, and the path
//! of each filled value is kept so result files can list what was defaulted.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use sfwm_core::montecarlo::{ChannelPair, RunConfig, RunSettings};
use sfwm_core::multiplexing::MultiplexSpec;
use sfwm_core::presets;
use sfwm_core::waveguide::{PumpSpec, WaveguideSpec, MAX_PEAK_POWER_W};

use crate::error::CliError;

pub const DEFAULT_PRESET: &str = "paper-fig3";
/// Upper bound on the number of points in one sweep.
pub const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Which evaluations produce result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Analytic,
    Mc,
    Both,
}

/// Inclusive power grid `start:stop:step`, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRange {
    pub start_w: f64,
    pub stop_w: f64,
    pub step_w: f64,
}

impl PowerRange {
    pub fn validate(&self) -> Result<(), CliError> {
        let field = "sweep.powers";
        if !self.start_w.is_finite() || self.start_w <= 0.0 {
            return Err(CliError::range(field, "start must be > 0"));
        }
        if !self.step_w.is_finite() || self.step_w <= 0.0 {
            return Err(CliError::range(field, "step must be > 0"));
        }
        if !self.stop_w.is_finite() || self.stop_w < self.start_w || self.stop_w > MAX_PEAK_POWER_W {
            return Err(CliError::range(
                field,
                format!("stop must lie in [start, {MAX_PEAK_POWER_W}] W"),
            ));
        }
        if (self.stop_w - self.start_w) / self.step_w > MAX_SWEEP_POINTS as f64 {
            return Err(CliError::range(field, format!("more than {MAX_SWEEP_POINTS} points")));
        }
        Ok(())
    }

    /// Grid points; `stop` is included when it lies within half a step of the grid.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop_w - self.start_w) / self.step_w + 0.5).floor() as usize;
        (0..=n)
            .map(|k| {
                let p = self.start_w + k as f64 * self.step_w;
                // Strip the representation error of repeated addition.
                (p * 1e12).round() / 1e12
            })
            .collect()
    }
}

impl FromStr for PowerRange {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::range("sweep.powers", format!("`{s}` is not START:STOP:STEP"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |t: &str| t.trim().trim_end_matches(['W', 'w']).parse::<f64>().map_err(|_| bad());
        let range = Self { start_w: num(parts[0])?, stop_w: num(parts[1])?, step_w: num(parts[2])? };
        range.validate()?;
        Ok(range)
    }
}

impl fmt::Display for PowerRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start_w, self.stop_w, self.step_w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub powers: PowerRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub mode: EvalMode,
}

/// Complete, validated description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub waveguide: WaveguideSpec,
    pub pump: PumpSpec,
    pub channels: ChannelPair,
    pub run: RunSettings,
    pub multiplex: MultiplexSpec,
    pub sweep: SweepSpec,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let run = presets::by_name(name).ok_or_else(|| CliError::Schema {
            path: "preset".into(),
            message: format!("unknown preset `{name}`; known: {}", presets::PRESET_NAMES.join(", ")),
        })?;
        Ok(Self::from_run_config(name, &run))
    }

    fn from_run_config(name: &str, run: &RunConfig) -> Self {
        Self {
            preset: name.to_string(),
            waveguide: run.waveguide.clone(),
            pump: run.pump,
            channels: run.channels,
            run: run.run,
            multiplex: presets::reference_multiplex(),
            sweep: SweepSpec { powers: PowerRange { start_w: 0.05, stop_w: 0.60, step_w: 0.01 } },
            output: OutputSpec { format: OutputFormat::Csv, mode: EvalMode::Analytic },
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            waveguide: self.waveguide.clone(),
            pump: self.pump,
            channels: self.channels,
            run: self.run,
        }
    }

    pub fn with_run_config(&self, run: &RunConfig) -> Self {
        Self {
            waveguide: run.waveguide.clone(),
            pump: run.pump,
            channels: run.channels,
            run: run.run,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let run = self.run_config();
        run.validate()?;
        // Evaluating μ checks that the pump lies inside the group-index table.
        run.pair_model()?;
        self.multiplex.validate()?;
        self.sweep.powers.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One value taken from the preset rather than the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub source: String,
    pub value: Value,
}

/// Values set on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub pulses: Option<u64>,
    pub powers: Option<PowerRange>,
    pub format: Option<OutputFormat>,
    pub mode: Option<EvalMode>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub provenance: Vec<Provenance>,
}

fn set(root: &mut Map<String, Value>, path: &[&str], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for key in parents {
        let entry = node.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        node = entry.as_object_mut().expect("object");
    }
    node.insert(last.to_string(), value);
}

/// Overlays `user` on `defaults`, recording every leaf that came from `defaults`.
fn merge(defaults: Value, user: Value, path: &str, source: &str, out: &mut Vec<Provenance>) -> Value {
    match (defaults, user) {
        (Value::Object(mut d), Value::Object(u)) => {
            let mut merged = Map::new();
            for (key, user_value) in u {
                let child = join(path, &key);
                let value = match d.remove(&key) {
                    Some(default_value) => merge(default_value, user_value, &child, source, out),
                    None => user_value,
                };
                merged.insert(key, value);
            }
            for (key, default_value) in d {
                record_leaves(&join(path, &key), &default_value, source, out);
                merged.insert(key, default_value);
            }
            Value::Object(merged)
        }
        (_, user) => user,
    }
}

fn record_leaves(path: &str, value: &Value, source: &str, out: &mut Vec<Provenance>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (key, v) in map {
                record_leaves(&join(path, key), v, source, out);
            }
        }
        _ => out.push(Provenance { path: path.to_string(), source: source.to_string(), value: value.clone() }),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Parses configuration text layered over its preset and applies overrides.
pub fn load_config_str(text: &str, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let user: Value = serde_json::from_str(text).map_err(|e| CliError::Parse {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })?;
    let Value::Object(mut user) = user else {
        return Err(CliError::Schema { path: "".into(), message: "top level must be a JSON object".into() });
    };
    resolve(&mut user, overrides)
}

/// Reads and resolves a configuration file; `None` uses the preset alone.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            load_config_str(&text, overrides)
        }
        None => resolve(&mut Map::new(), overrides),
    }
}

fn resolve(user: &mut Map<String, Value>, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    if let Some(preset) = &overrides.preset {
        user.insert("preset".into(), Value::String(preset.clone()));
    }
    let preset = match user.get("preset") {
        None => DEFAULT_PRESET.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(CliError::Schema { path: "preset".into(), message: "must be a string".into() })
        }
    };
    if let Some(seed) = overrides.seed {
        set(user, &["run", "seed"], seed.into());
    }
    if let Some(pulses) = overrides.pulses {
        set(user, &["run", "n_pulses"], pulses.into());
    }
    if let Some(powers) = overrides.powers {
        set(user, &["sweep", "powers"], serde_json::to_value(powers).expect("serializable"));
    }
    if let Some(format) = overrides.format {
        set(user, &["output", "format"], serde_json::to_value(format).expect("serializable"));
    }
    if let Some(mode) = overrides.mode {
        set(user, &["output", "mode"], serde_json::to_value(mode).expect("serializable"));
    }

    let defaults = serde_json::to_value(ExperimentConfig::from_preset(&preset)?).expect("serializable");
    let mut provenance = Vec::new();
    let source = format!("preset:{preset}");
    let merged = merge(defaults, Value::Object(std::mem::take(user)), "", &source, &mut provenance);

    let config: ExperimentConfig =
        serde_path_to_error::deserialize(merged).map_err(|e| CliError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    config.validate()?;
    Ok(LoadedConfig { config, provenance })
}
