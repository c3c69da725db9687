//! Grid data model: areas, tie-lines, control parameters, and the elementary
//! inertia conversions between moment of inertia, stored energy, the inertia
//! constant `H` and the phase-model inertia `M`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal frequency used when a model does not specify one.
pub const DEFAULT_F0: f64 = 50.0;

/// Frequency deviation at which the full primary reserve is reached when the
/// droop bias is left at its default.
pub const FULL_ACTIVATION_DEVIATION_HZ: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate area id `{0}`")]
    DuplicateArea(String),
    #[error("`{field}` references unknown area `{area}`")]
    DanglingTieEndpoint { field: String, area: String },
    #[error("tie graph is disconnected: area `{unreachable}` cannot be reached from `{root}`")]
    DisconnectedGraph { root: String, unreachable: String },
    #[error("`{field}` must be {requirement}, got {value}")]
    NonPositiveParameter {
        field: String,
        requirement: &'static str,
        value: f64,
    },
    #[error("`{field}`: {reason}")]
    InvalidTie { field: String, reason: String },
    #[error("model declares no areas")]
    NoAreas,
    #[error("base power must be positive, got {0}")]
    NonPositiveBasePower(f64),
    #[error("nominal frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
}

/// How the primary dead time enters the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// The units stay idle for `delay` seconds after the first deviation,
    /// then follow the droop of the current deviation.
    #[default]
    Activation,
    /// The droop acts on the deviation `delay` seconds ago.
    Transport,
}

/// Droop-based primary control of one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimaryControlParams {
    /// Saturation magnitude, MW.
    pub reserve: f64,
    /// Droop bias `S` in Hz/MW (`u = -Δf / S`). Defaults to the bias that
    /// activates the whole reserve at 200 mHz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droop_bias: Option<f64>,
    /// Activation dead time, s.
    pub delay: f64,
    #[serde(default)]
    pub delay_mode: DelayMode,
    /// Time after the disturbance at which the full reserve is reached, s.
    pub full_activation_time: f64,
}

impl Default for PrimaryControlParams {
    fn default() -> Self {
        Self {
            reserve: 0.0,
            droop_bias: None,
            delay: 5.0,
            delay_mode: DelayMode::Activation,
            full_activation_time: 30.0,
        }
    }
}

impl PrimaryControlParams {
    /// Droop bias in Hz/MW; infinite when no reserve is configured.
    pub fn effective_droop_bias(&self) -> f64 {
        match self.droop_bias {
            Some(s) => s,
            None if self.reserve > 0.0 => FULL_ACTIVATION_DEVIATION_HZ / self.reserve,
            None => f64::INFINITY,
        }
    }

    /// Steady-state primary gain `1/S`, MW/Hz.
    pub fn gain(&self) -> f64 {
        1.0 / self.effective_droop_bias()
    }

    /// Ramp-rate limit, MW/s.
    pub fn ramp_rate(&self) -> f64 {
        self.reserve / (self.full_activation_time - self.delay)
    }
}

/// PI-type secondary control (AGC) of one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryControlParams {
    /// Saturation magnitude, MW.
    pub reserve: f64,
    /// Proportional gain on the area control error.
    pub c_p: f64,
    /// Integral time constant, s.
    pub t_n: f64,
    /// Time for the full reserve to be delivered, s. Sets the ramp limit
    /// `reserve / response_time` of the secondary units.
    pub response_time: f64,
    /// Time after the first non-zero area control error before the units
    /// take over, s.
    #[serde(default = "default_secondary_delay")]
    pub delay: f64,
    /// ACE weighting of the frequency deviation, MW/Hz. Defaults to the primary
    /// gain plus the load damping of the area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_bias: Option<f64>,
}

impl Default for SecondaryControlParams {
    fn default() -> Self {
        Self {
            reserve: 0.0,
            c_p: 0.17,
            t_n: 120.0,
            response_time: 120.0,
            delay: default_secondary_delay(),
            frequency_bias: None,
        }
    }
}

fn default_secondary_delay() -> f64 {
    30.0
}

impl SecondaryControlParams {
    pub fn ramp_rate(&self) -> f64 {
        self.reserve / self.response_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    pub id: String,
    /// Inertia constant `H`, s. Zero is a purely inverter-fed area.
    pub h: f64,
    /// Base (rated) power, MW.
    pub s_base: f64,
    /// Load damping, % of `s_base` per Hz.
    pub k_load: f64,
    /// Reference areas keep angle and frequency deviation pinned at zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reference: bool,
    #[serde(default)]
    pub primary: PrimaryControlParams,
    #[serde(default)]
    pub secondary: SecondaryControlParams,
}

impl AreaParams {
    /// Load damping of the area, MW/Hz.
    pub fn load_damping(&self) -> f64 {
        load_damping_mw_per_hz(self.k_load, self.s_base)
    }

    /// ACE frequency bias, MW/Hz.
    pub fn frequency_bias(&self) -> f64 {
        self.secondary
            .frequency_bias
            .unwrap_or_else(|| self.primary.gain() + self.load_damping())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLine {
    pub from: String,
    pub to: String,
    /// Thermal rating `P̂_T`, MW.
    pub rating: f64,
    /// Synchronising coupling `V_i V_j B_ij` in MW (voltages at 1 p.u.).
    /// Defaults to the rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
}

impl TieLine {
    pub fn effective_coupling(&self) -> f64 {
        self.coupling.unwrap_or(self.rating)
    }
}

fn default_f0() -> f64 {
    DEFAULT_F0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModel {
    #[serde(default = "default_f0")]
    pub f0: f64,
    pub areas: Vec<AreaParams>,
    #[serde(default)]
    pub ties: Vec<TieLine>,
}

/// A [`GridModel`] whose invariants have been checked, with tie endpoints
/// resolved to area indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedGridModel {
    model: GridModel,
    endpoints: Vec<(usize, usize)>,
}

impl Serialize for ValidatedGridModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.model.serialize(serializer)
    }
}

impl ValidatedGridModel {
    pub fn f0(&self) -> f64 {
        self.model.f0
    }

    pub fn areas(&self) -> &[AreaParams] {
        &self.model.areas
    }

    pub fn ties(&self) -> &[TieLine] {
        &self.model.ties
    }

    pub fn as_model(&self) -> &GridModel {
        &self.model
    }

    pub fn into_model(self) -> GridModel {
        self.model
    }

    /// Area indices `(from, to)` of tie `k`.
    pub fn endpoints(&self, k: usize) -> (usize, usize) {
        self.endpoints[k]
    }

    pub fn tie_endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    pub fn area_index(&self, id: &str) -> Option<usize> {
        self.model.areas.iter().position(|a| a.id == id)
    }

    /// Indices of areas with free dynamics (not pinned as reference).
    pub fn dynamic_areas(&self) -> Vec<usize> {
        (0..self.model.areas.len())
            .filter(|&i| !self.model.areas[i].reference)
            .collect()
    }

    /// Phase-model inertia `M_i` of every area, MW·s²/rad.
    pub fn inertia_m(&self) -> Vec<f64> {
        self.model
            .areas
            .iter()
            .map(|a| m_from_h_unchecked(a.h, a.s_base, self.model.f0))
            .collect()
    }

    /// Phase-model damping `k_i` of every area derived from `k_load`,
    /// MW per rad/s.
    pub fn load_damping_per_rad(&self) -> Vec<f64> {
        self.model
            .areas
            .iter()
            .map(|a| damping_per_rad(a.k_load, a.s_base))
            .collect()
    }

    /// Copy of the model with `f` applied to every area, re-validated.
    pub fn map_areas(&self, mut f: impl FnMut(&mut AreaParams)) -> Result<Self, ModelError> {
        let mut model = self.model.clone();
        model.areas.iter_mut().for_each(&mut f);
        validate(&model)
    }
}

fn require(field: String, value: f64, ok: bool, requirement: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositiveParameter {
            field,
            requirement,
            value,
        })
    }
}

fn validate_area(i: usize, a: &AreaParams) -> Result<(), ModelError> {
    let p = |name: &str| format!("areas[{i}].{name}");
    require(p("h"), a.h, a.h >= 0.0, "non-negative")?;
    require(p("s_base"), a.s_base, a.s_base > 0.0, "positive")?;
    require(p("k_load"), a.k_load, a.k_load > 0.0, "positive")?;

    let pr = &a.primary;
    require(p("primary.reserve"), pr.reserve, pr.reserve >= 0.0, "non-negative")?;
    require(p("primary.delay"), pr.delay, pr.delay >= 0.0, "non-negative")?;
    require(
        p("primary.full_activation_time"),
        pr.full_activation_time,
        pr.full_activation_time > pr.delay,
        "greater than primary.delay",
    )?;
    if let Some(s) = pr.droop_bias {
        require(p("primary.droop_bias"), s, s > 0.0, "positive")?;
    }

    let sec = &a.secondary;
    require(p("secondary.reserve"), sec.reserve, sec.reserve >= 0.0, "non-negative")?;
    require(p("secondary.c_p"), sec.c_p, sec.c_p >= 0.0, "non-negative")?;
    require(p("secondary.t_n"), sec.t_n, sec.t_n > 0.0, "positive")?;
    require(
        p("secondary.response_time"),
        sec.response_time,
        sec.response_time > 0.0,
        "positive",
    )?;
    require(p("secondary.delay"), sec.delay, sec.delay >= 0.0, "non-negative")?;
    if let Some(b) = sec.frequency_bias {
        require(p("secondary.frequency_bias"), b, b >= 0.0, "non-negative")?;
    }
    Ok(())
}

/// Checks every model invariant and resolves tie endpoints.
///
/// Validation is idempotent: `validate(v.as_model())` reproduces `v`.
pub fn validate(model: &GridModel) -> Result<ValidatedGridModel, ModelError> {
    require("f0".into(), model.f0, model.f0 > 0.0, "positive")?;
    if model.areas.is_empty() {
        return Err(ModelError::NoAreas);
    }

    let mut index = HashMap::with_capacity(model.areas.len());
    for (i, a) in model.areas.iter().enumerate() {
        if index.insert(a.id.as_str(), i).is_some() {
            return Err(ModelError::DuplicateArea(a.id.clone()));
        }
        validate_area(i, a)?;
    }

    let mut endpoints = Vec::with_capacity(model.ties.len());
    let mut pairs = HashSet::new();
    for (k, t) in model.ties.iter().enumerate() {
        let resolve = |field: &str, id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| ModelError::DanglingTieEndpoint {
                    field: format!("ties[{k}].{field}"),
                    area: id.to_string(),
                })
        };
        let from = resolve("from", &t.from)?;
        let to = resolve("to", &t.to)?;
        if from == to {
            return Err(ModelError::InvalidTie {
                field: format!("ties[{k}]"),
                reason: format!("connects area `{}` to itself", t.from),
            });
        }
        if !pairs.insert((from.min(to), from.max(to))) {
            return Err(ModelError::InvalidTie {
                field: format!("ties[{k}]"),
                reason: format!("second tie-line between `{}` and `{}`", t.from, t.to),
            });
        }
        require(format!("ties[{k}].rating"), t.rating, t.rating > 0.0, "positive")?;
        if let Some(c) = t.coupling {
            require(format!("ties[{k}].coupling"), c, c > 0.0, "positive")?;
        }
        endpoints.push((from, to));
    }

    // Breadth-first search from the first area over the undirected tie graph.
    let n = model.areas.len();
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in &endpoints {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(ModelError::DisconnectedGraph {
            root: model.areas[0].id.clone(),
            unreachable: model.areas[i].id.clone(),
        });
    }

    Ok(ValidatedGridModel {
        model: model.clone(),
        endpoints,
    })
}

/// Rotational energy `½·J·(2π·f_m)²` in joules for moment of inertia `j`
/// (kg·m²) spinning at `f_m` Hz.
pub fn kinetic_energy(j: f64, f_m: f64) -> f64 {
    let omega = 2.0 * PI * f_m;
    0.5 * j * omega * omega
}

/// Inertia constant `H = E_kin / S_B`, seconds. Energy and power must share
/// a unit base (J and W, or MJ and MW).
pub fn inertia_constant(e_kin: f64, s_base: f64) -> Result<f64, ModelError> {
    if s_base > 0.0 {
        Ok(e_kin / s_base)
    } else {
        Err(ModelError::NonPositiveBasePower(s_base))
    }
}

/// Stored energy `H·S_B`; inverse of [`inertia_constant`].
pub fn stored_energy(h: f64, s_base: f64) -> Result<f64, ModelError> {
    if s_base > 0.0 {
        Ok(h * s_base)
    } else {
        Err(ModelError::NonPositiveBasePower(s_base))
    }
}

/// Phase-model inertia `M = 2·H·S_B / (2π·f0)`, MW·s²/rad for `S_B` in MW.
pub fn m_from_h(h: f64, s_base: f64, f0: f64) -> Result<f64, ModelError> {
    if f0 > 0.0 {
        Ok(m_from_h_unchecked(h, s_base, f0))
    } else {
        Err(ModelError::NonPositiveFrequency(f0))
    }
}

fn m_from_h_unchecked(h: f64, s_base: f64, f0: f64) -> f64 {
    2.0 * h * s_base / (2.0 * PI * f0)
}

/// Frequency sensitivity of load, MW/Hz.
///
/// `k_load` is read as per cent of base power per hertz: a deviation of
/// 1 Hz changes load by `k_load/100·S_B`.
pub fn load_damping_mw_per_hz(k_load: f64, s_base: f64) -> f64 {
    k_load * s_base / 100.0
}

/// Load damping as the phase-model coefficient `k_i`, MW per rad/s.
pub fn damping_per_rad(k_load: f64, s_base: f64) -> f64 {
    load_damping_mw_per_hz(k_load, s_base) / (2.0 * PI)
}
