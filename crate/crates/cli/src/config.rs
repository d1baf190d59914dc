use std::path::Path;

use hotmol::beamline::{BeamlineConfig, ModelParams, Scenario};
use hotmol::thermometry::FitOptions;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSettings {
    /// K
    pub temperatures: Vec<f64>,
    /// eV
    pub energy_min: f64,
    pub energy_max: f64,
    pub energy_points: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings {
            temperatures: vec![1000.0, 1500.0, 2000.0, 2500.0, 3000.0],
            energy_min: 1.0,
            energy_max: 6.0,
            energy_points: 251,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoolSettings {
    /// Initial temperatures of the sampled trajectories, K.
    pub initial_temperatures: Vec<f64>,
    pub trajectory_points: usize,
}

impl Default for CoolSettings {
    fn default() -> Self {
        CoolSettings { initial_temperatures: vec![2000.0, 3000.0, 4000.0], trajectory_points: 101 }
    }
}

/// Scenario grid of the sweep subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    /// m/s
    pub velocities: Vec<f64>,
    /// P/P₀
    pub power_scales: Vec<f64>,
    pub beam_counts: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            velocities: (0..=10).map(|i| 60.0 + 20.0 * i as f64).collect(),
            power_scales: (0..=10).map(|i| i as f64 / 10.0).collect(),
            beam_counts: vec![4, 10, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub samples: usize,
    pub scenarios: Vec<Scenario>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            samples: 100_000,
            scenarios: [(100.0, 0.5, 10), (140.0, 0.6, 10), (190.0, 1.0, 16)]
                .iter()
                .map(|&(v, power_scale, n_beams)| Scenario { v, power_scale, n_beams })
                .collect(),
        }
    }
}

/// Everything a run depends on besides the cross-section table and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub beamline: BeamlineConfig,
    pub params: ModelParams,
    pub fit: FitOptions,
    pub sweep: SweepSettings,
    pub spectrum: SpectrumSettings,
    pub cool: CoolSettings,
    pub oracle: OracleSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            beamline: BeamlineConfig::default(),
            params: ModelParams::reference(),
            fit: FitOptions::default(),
            sweep: SweepSettings::default(),
            spectrum: SpectrumSettings::default(),
            cool: CoolSettings::default(),
            oracle: OracleSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))?;
                let parsed: Value = serde_json::from_str(&text).map_err(|e| {
                    CliError::new("config", format!("{}: line {}: column {}: {e}", p.display(), e.line(), e.column()))
                })?;
                // validate the file on its own so its errors name the file
                serde_json::from_value::<RunConfig>(parsed.clone())
                    .map_err(|e| CliError::new("config", format!("{}: {e}", p.display())))?;
                parsed
            }
            None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
        };
        let defaults = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        for item in overrides {
            apply_override(&mut value, &defaults, item)?;
        }
        let config: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::new("config", format!("after overrides: {e}")))?;
        config.beamline.validate().map_err(|e| CliError::new("config", e.to_string()))?;
        Ok(config)
    }
}

/// Sets `a.b.c=value`; `value` is parsed as JSON, falling back to a string.
fn apply_override(root: &mut Value, defaults: &Value, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::new("config", format!("override `{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::new("config", format!("override `{item}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    let mut schema = Some(defaults);
    for (depth, part) in path.iter().enumerate() {
        schema = schema.and_then(|s| s.get(*part));
        let known = schema.is_some();
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::new("config", format!("override `{key}`: `{}` is not a table", path[..depth].join(".")))
        })?;
        if !known && !obj.contains_key(*part) {
            return Err(CliError::new("config", format!("override `{key}`: unknown key `{part}`")));
        }
        if depth + 1 == path.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    unreachable!("override path has at least one segment")
}
