//! Run configuration: one JSON document holding a grid model and the task
//! sections to execute on it, plus dotted `key=value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analytics::InertiaAssumptions;
use crate::engine::{AreaControls, Event, Scenario, SimError, DEFAULT_RECORD_STRIDE};
use crate::model::{validate, GridModel, ModelError, ValidatedGridModel};
use crate::region::{RegionError, RegionSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Syntax(String),
    #[error("config key `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("config has no `{0}` section")]
    MissingSection(&'static str),
    #[error("config has no task section (scenario, region, phase or analytics)")]
    NoTask,
    #[error("grid: {0}")]
    Model(#[from] ModelError),
    #[error("scenario: {0}")]
    Scenario(#[from] SimError),
    #[error("region: {0}")]
    Region(#[from] RegionError),
}

fn default_horizon() -> f64 {
    400.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_record_stride() -> usize {
    DEFAULT_RECORD_STRIDE
}

fn default_thresholds() -> Vec<f64> {
    vec![49.8, 49.5]
}

fn default_band() -> f64 {
    0.5
}

/// Time-domain simulation with controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
    /// Applied to every area.
    #[serde(default)]
    pub controls: AreaControls,
    /// Absolute frequencies whose first crossing is reported, Hz.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

/// Faulted run of a two-area model without controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub events: Vec<Event>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Frequency band whose violation is reported, Hz.
    #[serde(default = "default_band")]
    pub band_hz: f64,
}

fn default_inertia_edges() -> Vec<f64> {
    (0..=12).map(|k| 0.5 * k as f64).collect()
}

fn default_share_edges() -> Vec<f64> {
    (0..=10).map(|k| 10.0 * k as f64).collect()
}

fn default_inertia_threshold() -> f64 {
    4.0
}

fn default_share_threshold() -> f64 {
    30.0
}

/// Inertia statistics over a dispatch time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsSection {
    /// Dispatch CSV, relative paths resolved against the config file.
    pub dispatch: PathBuf,
    #[serde(default)]
    pub assumptions: InertiaAssumptions,
    /// Histogram edges of aggregated inertia, s.
    #[serde(default = "default_inertia_edges")]
    pub inertia_edges: Vec<f64>,
    /// Histogram edges of the inverter-fed share, %.
    #[serde(default = "default_share_edges")]
    pub share_edges: Vec<f64>,
    /// Hours with aggregated inertia below this are counted, s.
    #[serde(default = "default_inertia_threshold")]
    pub inertia_threshold: f64,
    /// Hours with an inverter-fed share at or above this are counted, %.
    #[serde(default = "default_share_threshold")]
    pub share_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_output_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputSection {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytics: Option<AnalyticsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Every accepted key with its unit, for help output. Array elements are
/// written `[]`.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("grid.f0", "Hz", "nominal frequency (default 50)"),
    ("grid.areas[].id", "-", "unique area name"),
    ("grid.areas[].h", "s", "inertia constant H"),
    ("grid.areas[].s_base", "MW", "base power S_B"),
    ("grid.areas[].k_load", "%/Hz", "load damping as % of s_base per Hz"),
    ("grid.areas[].reference", "bool", "pin angle and frequency at zero"),
    ("grid.areas[].primary.reserve", "MW", "primary reserve (saturation)"),
    ("grid.areas[].primary.droop_bias", "Hz/MW", "droop bias S (default: full reserve at 0.2 Hz)"),
    ("grid.areas[].primary.delay", "s", "activation dead time"),
    ("grid.areas[].primary.delay_mode", "-", "activation | transport"),
    ("grid.areas[].primary.full_activation_time", "s", "time to full primary reserve"),
    ("grid.areas[].secondary.reserve", "MW", "secondary reserve (saturation)"),
    ("grid.areas[].secondary.c_p", "-", "proportional gain"),
    ("grid.areas[].secondary.t_n", "s", "integral time constant"),
    ("grid.areas[].secondary.response_time", "s", "time to full secondary reserve"),
    ("grid.areas[].secondary.delay", "s", "take-over delay after the first deviation"),
    ("grid.areas[].secondary.frequency_bias", "MW/Hz", "ACE frequency bias (default: primary gain + load damping)"),
    ("grid.ties[].from", "-", "area id"),
    ("grid.ties[].to", "-", "area id"),
    ("grid.ties[].rating", "MW", "thermal rating"),
    ("grid.ties[].coupling", "MW", "synchronising coupling V_i V_j B_ij (default: rating)"),
    ("scenario.events[].time", "s", "event time, a multiple of dt"),
    ("scenario.events[].kind", "-", "step_imbalance | clear_fault"),
    ("scenario.events[].area", "-", "area id"),
    ("scenario.events[].delta_p", "MW", "power imbalance, negative for a loss"),
    ("scenario.events[].duration", "s", "optional automatic clearing"),
    ("scenario.horizon", "s", "simulated time (default 400)"),
    ("scenario.dt", "s", "integration step (default 0.01)"),
    ("scenario.record_stride", "steps", "record every n-th step"),
    ("scenario.controls.primary", "bool", "enable primary control"),
    ("scenario.controls.secondary", "bool", "enable secondary control"),
    ("scenario.thresholds", "Hz", "absolute frequencies whose first crossing is reported"),
    ("region.x1_range", "rad", "[min, max] of δ_1 − δ_2"),
    ("region.x1_samples", "-", "grid points along x1"),
    ("region.x2_range", "Hz", "[min, max] of f_1 − f_2"),
    ("region.x2_samples", "-", "grid points along x2"),
    ("region.epsilon", "rad, Hz", "convergence band"),
    ("region.t_max", "s", "latest time to enter the band"),
    ("region.dt", "s", "integration step (default 0.02)"),
    ("region.hold_time", "s", "time to stay in the band (default 5)"),
    ("region.unwrap_bound", "rad", "|x1| counted as divergence (default 2π)"),
    ("phase.events", "-", "fault schedule, same fields as scenario.events[]"),
    ("phase.horizon", "s", "simulated time (default 400)"),
    ("phase.dt", "s", "integration step (default 0.01)"),
    ("phase.band_hz", "Hz", "reported frequency band (default 0.5)"),
    ("analytics.dispatch", "path", "dispatch CSV relative to the config file"),
    ("analytics.assumptions.h_conv", "s", "inertia of conventional units (default 6)"),
    ("analytics.assumptions.h_res", "s", "inertia of inverter-fed units (default 0)"),
    ("analytics.inertia_edges", "s", "histogram edges of aggregated inertia"),
    ("analytics.share_edges", "%", "histogram edges of the inverter-fed share"),
    ("analytics.inertia_threshold", "s", "count hours below (default 4)"),
    ("analytics.share_threshold", "%", "count hours at or above (default 30)"),
    ("output.directory", "path", "artifact directory (default out)"),
    ("output.formats", "-", "any of csv, json"),
];

/// Sets `key` (dot separated, numeric segments index arrays) to `value`,
/// creating missing object levels. `value` is read as JSON when it parses
/// and as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override {
        key: assignment.to_string(),
        reason: "expected key=value".into(),
    })?;
    let key = key.trim();
    let fail = |reason: String| ConfigError::Override {
        key: key.to_string(),
        reason,
    };
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(fail("empty key segment".into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));

    let mut node = doc;
    let segments: Vec<&str> = key.split('.').collect();
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| fail(format!("`{seg}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| fail(format!("index {idx} out of range (length {len})")))?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert_with(|| {
                if last {
                    Value::Null
                } else {
                    Value::Object(Default::default())
                }
            }),
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut()
                    .expect("just created")
                    .entry(seg.to_string())
                    .or_insert(Value::Null)
            }
            _ => return Err(fail(format!("`{seg}` descends into a scalar"))),
        };
    }
    *node = value;
    Ok(())
}

/// Parses a config document, applies overrides in order and checks every
/// section that is present.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config: ConfigFile = serde_path_to_error::deserialize(doc).map_err(|e| ConfigError::Invalid {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.check()?;
    Ok(config)
}

impl ConfigFile {
    /// Validates the grid and every present task section. Events off the
    /// integration grid are reported here rather than at run time.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.scenario.is_none() && self.region.is_none() && self.phase.is_none() && self.analytics.is_none() {
            return Err(ConfigError::NoTask);
        }
        let model = self.model()?;
        if self.scenario.is_some() {
            self.scenario(&model)?;
        }
        if let Some(region) = &self.region {
            region.validate()?;
        }
        if let Some(phase) = &self.phase {
            Scenario::builder(model)
                .events(phase.events.clone())
                .horizon(phase.horizon)
                .dt(phase.dt)
                .all_controls(AreaControls::DISABLED)
                .build()?;
        }
        if let Some(a) = &self.analytics {
            a.assumptions.validate().map_err(|e| ConfigError::Invalid {
                path: "analytics.assumptions".into(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ValidatedGridModel, ConfigError> {
        Ok(validate(&self.grid)?)
    }

    pub fn scenario(&self, model: &ValidatedGridModel) -> Result<Scenario, ConfigError> {
        let s = self.scenario.as_ref().ok_or(ConfigError::MissingSection("scenario"))?;
        Ok(Scenario::builder(model.clone())
            .events(s.events.clone())
            .horizon(s.horizon)
            .dt(s.dt)
            .record_stride(s.record_stride)
            .all_controls(s.controls)
            .build()?)
    }
}
