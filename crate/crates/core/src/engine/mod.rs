//! Closed-loop time-domain simulation.
//!
//! The continuous states (angle and angular-speed deviation per area) are
//! advanced with classic RK4 at a fixed step. Controller outputs are evaluated
//! once per step from the state at the start of the step and held over it,
//! which keeps the delay buffers and limiters exact at step boundaries.
//! Events are applied exactly at their scheduled step, so event times must be
//! multiples of the step size.

mod export;
mod metrics;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{AceInputs, PrimaryState, SecondaryState};
use crate::model::ValidatedGridModel;
use crate::ode::Rk4;
use crate::par::{self, Execution};
use crate::swing::{AreaState, PhaseModel, SwingError};

pub use export::{metrics_json, trajectory_csv_header, write_trajectory_csv};
pub use metrics::{
    compare_runs, extract_metrics, AreaComparison, AreaMetrics, ComparisonReport, Crossing, Metrics, TieComparison,
    TieMetrics, SETTLING_BAND_HZ,
};

/// Default integration step, s.
pub const DEFAULT_DT: f64 = 0.01;
/// Default number of integration steps per recorded sample.
pub const DEFAULT_RECORD_STRIDE: usize = 10;
/// Frequency deviation beyond which a run is considered diverged, Hz.
pub const DIVERGENCE_LIMIT_HZ: f64 = 5.0;

/// Relative tolerance when checking that an event time lies on the step grid.
const GRID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("`{field}` is invalid: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("event {index} at t = {time} s is not on the step grid (dt = {dt} s)")]
    EventOffGrid { index: usize, time: f64, dt: f64 },
    #[error("event {index} references unknown area `{area}`")]
    UnknownArea { index: usize, area: String },
    #[error("state diverged at t = {time} s in area `{area}`; partial trajectory has {} samples", partial.len())]
    NonFiniteState {
        time: f64,
        area: String,
        partial: Box<Trajectory>,
    },
    #[error(transparent)]
    Swing(#[from] SwingError),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("runs are not comparable: {0}")]
    TopologyMismatch(String),
}

/// What happens at an [`Event`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    /// Adds `delta_p` MW to the power balance of `area` (negative for a
    /// generation loss), for `duration` seconds or until cleared.
    StepImbalance {
        area: String,
        delta_p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<f64>,
    },
    /// Removes every active step imbalance in `area`.
    ClearFault { area: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// s
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn step(time: f64, area: &str, delta_p: f64) -> Self {
        Self {
            time,
            kind: EventKind::StepImbalance {
                area: area.to_string(),
                delta_p,
                duration: None,
            },
        }
    }

    pub fn clear(time: f64, area: &str) -> Self {
        Self {
            time,
            kind: EventKind::ClearFault { area: area.to_string() },
        }
    }

    fn area(&self) -> &str {
        match &self.kind {
            EventKind::StepImbalance { area, .. } | EventKind::ClearFault { area } => area,
        }
    }
}

/// Which controllers are active in an area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaControls {
    #[serde(default = "yes")]
    pub primary: bool,
    #[serde(default = "yes")]
    pub secondary: bool,
}

fn yes() -> bool {
    true
}

impl Default for AreaControls {
    fn default() -> Self {
        Self::ENABLED
    }
}

impl AreaControls {
    pub const ENABLED: Self = Self {
        primary: true,
        secondary: true,
    };
    pub const DISABLED: Self = Self {
        primary: false,
        secondary: false,
    };
    pub const PRIMARY_ONLY: Self = Self {
        primary: true,
        secondary: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Add { area: usize, tag: usize, delta_p: f64 },
    Remove { tag: usize },
    Clear { area: usize },
}

/// A validated simulation run: model, event schedule, horizon and solver
/// settings. Build with [`Scenario::builder`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    model: ValidatedGridModel,
    events: Vec<Event>,
    horizon: f64,
    dt: f64,
    record_stride: usize,
    controls: Vec<AreaControls>,
    damping: Option<Vec<f64>>,
    initial: Vec<AreaState>,
    steps: usize,
    schedule: Vec<(usize, Action)>,
}

#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    model: ValidatedGridModel,
    events: Vec<Event>,
    horizon: f64,
    dt: f64,
    record_stride: usize,
    controls: Option<Vec<AreaControls>>,
    damping: Option<Vec<f64>>,
    initial: Option<Vec<AreaState>>,
}

impl ScenarioBuilder {
    pub fn events(mut self, events: Vec<Event>) -> Self {
        self.events = events;
        self
    }

    pub fn event(mut self, event: Event) -> Self {
        self.events.push(event);
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Same controls for every area.
    pub fn all_controls(mut self, controls: AreaControls) -> Self {
        self.controls = Some(vec![controls; self.model.areas().len()]);
        self
    }

    pub fn controls(mut self, controls: Vec<AreaControls>) -> Self {
        self.controls = Some(controls);
        self
    }

    /// Overrides the load-derived damping with explicit `k_i`, MW per rad/s.
    pub fn damping(mut self, damping: Vec<f64>) -> Self {
        self.damping = Some(damping);
        self
    }

    pub fn initial_state(mut self, initial: Vec<AreaState>) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn build(self) -> Result<Scenario, SimError> {
        let n = self.model.areas().len();
        let invalid = |field: &str, reason: String| SimError::InvalidScenario {
            field: field.to_string(),
            reason,
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be at least 1".into()));
        }
        let controls = self.controls.unwrap_or_else(|| vec![AreaControls::ENABLED; n]);
        if controls.len() != n {
            return Err(invalid("controls", format!("expected {n} entries, got {}", controls.len())));
        }
        if let Some(d) = &self.damping {
            if d.len() != n || d.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                return Err(invalid("damping", format!("expected {n} non-negative values")));
            }
        }
        let initial = self.initial.unwrap_or_else(|| vec![AreaState::default(); n]);
        if initial.len() != n || initial.iter().any(|s| !(s.delta.is_finite() && s.f_dev.is_finite())) {
            return Err(invalid("initial_state", format!("expected {n} finite states")));
        }

        let steps = grid_steps(self.horizon, self.dt).unwrap_or((self.horizon / self.dt).floor() as usize);
        let mut events = self.events;
        events.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut schedule = Vec::new();
        for (index, e) in events.iter().enumerate() {
            if !(e.time >= 0.0 && e.time <= self.horizon) {
                return Err(invalid(
                    &format!("events[{index}].time"),
                    format!("{} s lies outside [0, {}]", e.time, self.horizon),
                ));
            }
            let area = self.model.area_index(e.area()).ok_or_else(|| SimError::UnknownArea {
                index,
                area: e.area().to_string(),
            })?;
            let at = grid_steps(e.time, self.dt).ok_or(SimError::EventOffGrid {
                index,
                time: e.time,
                dt: self.dt,
            })?;
            match &e.kind {
                EventKind::StepImbalance { delta_p, duration, .. } => {
                    if !delta_p.is_finite() {
                        return Err(invalid(&format!("events[{index}].delta_p"), "must be finite".into()));
                    }
                    schedule.push((
                        at,
                        Action::Add {
                            area,
                            tag: index,
                            delta_p: *delta_p,
                        },
                    ));
                    if let Some(d) = duration {
                        if !(d.is_finite() && *d > 0.0) {
                            return Err(invalid(&format!("events[{index}].duration"), format!("must be positive, got {d}")));
                        }
                        let end = e.time + d;
                        let end_step = grid_steps(end, self.dt).ok_or(SimError::EventOffGrid {
                            index,
                            time: end,
                            dt: self.dt,
                        })?;
                        schedule.push((end_step, Action::Remove { tag: index }));
                    }
                }
                EventKind::ClearFault { .. } => schedule.push((at, Action::Clear { area })),
            }
        }
        // Stable sort: simultaneous actions keep their declaration order.
        schedule.sort_by_key(|(step, _)| *step);

        Ok(Scenario {
            model: self.model,
            events,
            horizon: self.horizon,
            dt: self.dt,
            record_stride: self.record_stride,
            controls,
            damping: self.damping,
            initial,
            steps,
            schedule,
        })
    }
}

/// Number of steps of size `dt` that make up `time`, if `time` is on the grid.
fn grid_steps(time: f64, dt: f64) -> Option<usize> {
    let ratio = time / dt;
    let rounded = ratio.round();
    ((ratio - rounded).abs() <= GRID_TOLERANCE * rounded.max(1.0)).then_some(rounded as usize)
}

impl Scenario {
    pub fn builder(model: ValidatedGridModel) -> ScenarioBuilder {
        ScenarioBuilder {
            model,
            events: Vec::new(),
            horizon: 400.0,
            dt: DEFAULT_DT,
            record_stride: DEFAULT_RECORD_STRIDE,
            controls: None,
            damping: None,
            initial: None,
        }
    }

    pub fn model(&self) -> &ValidatedGridModel {
        &self.model
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn record_stride(&self) -> usize {
        self.record_stride
    }

    pub fn controls(&self) -> &[AreaControls] {
        &self.controls
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Rebuilds the scenario with a different step size and stride.
    pub fn with_resolution(&self, dt: f64, record_stride: usize) -> Result<Scenario, SimError> {
        ScenarioBuilder {
            model: self.model.clone(),
            events: self.events.clone(),
            horizon: self.horizon,
            dt,
            record_stride,
            controls: Some(self.controls.clone()),
            damping: self.damping.clone(),
            initial: Some(self.initial.clone()),
        }
        .build()
    }
}

/// Recorded simulation output on a uniform time grid.
///
/// Per-area series are indexed `[area][sample]`, per-tie series
/// `[tie][sample]`. Angles are unwrapped; exports wrap them.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub f0: f64,
    pub area_ids: Vec<String>,
    /// `(from, to)` area ids; flows are positive from `from` to `to`.
    pub tie_ids: Vec<(String, String)>,
    /// Times of the scheduled events, s.
    pub event_times: Vec<f64>,
    pub time: Vec<f64>,
    /// Hz
    pub f_dev: Vec<Vec<f64>>,
    /// rad
    pub delta: Vec<Vec<f64>>,
    /// MW
    pub p_prim: Vec<Vec<f64>>,
    /// MW
    pub p_sec: Vec<Vec<f64>>,
    /// MW
    pub tie_flow: Vec<Vec<f64>>,
    /// MW/s
    pub tie_flow_rate: Vec<Vec<f64>>,
}

impl Trajectory {
    fn with_layout(scenario: &Scenario, capacity: usize) -> Self {
        let model = &scenario.model;
        let n = model.areas().len();
        let m = model.ties().len();
        let series = |count| vec![Vec::with_capacity(capacity); count];
        Self {
            f0: model.f0(),
            area_ids: model.areas().iter().map(|a| a.id.clone()).collect(),
            tie_ids: model.ties().iter().map(|t| (t.from.clone(), t.to.clone())).collect(),
            event_times: scenario.events.iter().map(|e| e.time).collect(),
            time: Vec::with_capacity(capacity),
            f_dev: series(n),
            delta: series(n),
            p_prim: series(n),
            p_sec: series(n),
            tie_flow: series(m),
            tie_flow_rate: series(m),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn area_index(&self, id: &str) -> Option<usize> {
        self.area_ids.iter().position(|a| a == id)
    }

    /// Absolute frequency of area `i` at every sample, Hz.
    pub fn frequency(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.f_dev[i].iter().map(move |d| self.f0 + d)
    }
}

/// Runs the scenario to its horizon.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory, SimError> {
    let model = &scenario.model;
    let n = model.areas().len();
    let damping = match &scenario.damping {
        Some(d) => d.clone(),
        None => model.load_damping_per_rad(),
    };
    let phase = PhaseModel::new(model, &damping)?;

    let dt = scenario.dt;
    let two_pi = 2.0 * PI;
    let mut state = vec![0.0; 2 * n];
    for (i, s) in scenario.initial.iter().enumerate() {
        if phase.is_dynamic(i) {
            state[i] = s.delta;
            state[n + i] = s.omega();
        }
    }

    let biases: Vec<f64> = model.areas().iter().map(|a| a.frequency_bias()).collect();
    let active: Vec<AreaControls> = scenario
        .controls
        .iter()
        .enumerate()
        .map(|(i, c)| if phase.is_dynamic(i) { *c } else { AreaControls::DISABLED })
        .collect();

    let mut primary = vec![PrimaryState::new(); n];
    let mut secondary = vec![SecondaryState::new(); n];
    let mut faults: Vec<(usize, usize, f64)> = Vec::new();
    let mut schedule = scenario.schedule.iter().peekable();

    let mut rk4 = Rk4::new(2 * n);
    let mut exports = vec![0.0; n];
    let mut p_prim = vec![0.0; n];
    let mut p_sec = vec![0.0; n];
    let mut imbalance = vec![0.0; n];

    let mut traj = Trajectory::with_layout(scenario, scenario.steps / scenario.record_stride + 1);

    for k in 0..=scenario.steps {
        while let Some((_, action)) = schedule.next_if(|(at, _)| *at == k) {
            match *action {
                Action::Add { area, tag, delta_p } => faults.push((tag, area, delta_p)),
                Action::Remove { tag } => faults.retain(|f| f.0 != tag),
                Action::Clear { area } => faults.retain(|f| f.1 != area),
            }
        }

        let (delta, omega) = state.split_at(n);
        phase.tie_exports(delta, &mut exports);
        for i in 0..n {
            let f_dev = omega[i] / two_pi;
            let area = &model.areas()[i];
            p_prim[i] = if active[i].primary {
                primary[i].step(f_dev, &area.primary, dt)
            } else {
                0.0
            };
            p_sec[i] = if active[i].secondary {
                let ace = AceInputs {
                    tie_deviation: exports[i],
                    f_dev,
                    frequency_bias: biases[i],
                };
                secondary[i].step(&ace, &area.secondary, dt)
            } else {
                0.0
            };
        }

        if k % scenario.record_stride == 0 {
            record(&mut traj, &phase, &state, &p_prim, &p_sec, k as f64 * dt);
        }
        if k == scenario.steps {
            break;
        }

        imbalance.copy_from_slice(&p_prim);
        for i in 0..n {
            imbalance[i] += p_sec[i];
        }
        for &(_, area, dp) in &faults {
            imbalance[area] += dp;
        }
        rk4.step(&mut state, dt, |y, dy| phase.derivatives(y, &imbalance, dy));

        let bad = (0..n).find(|&i| {
            let f_dev = state[n + i] / two_pi;
            !state[i].is_finite() || !f_dev.is_finite() || f_dev.abs() > DIVERGENCE_LIMIT_HZ
        });
        if let Some(i) = bad {
            return Err(SimError::NonFiniteState {
                time: (k + 1) as f64 * dt,
                area: model.areas()[i].id.clone(),
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

fn record(traj: &mut Trajectory, phase: &PhaseModel, state: &[f64], p_prim: &[f64], p_sec: &[f64], t: f64) {
    let n = phase.len();
    let (delta, omega) = state.split_at(n);
    traj.time.push(t);
    for i in 0..n {
        traj.f_dev[i].push(omega[i] / (2.0 * PI));
        traj.delta[i].push(delta[i]);
        traj.p_prim[i].push(p_prim[i]);
        traj.p_sec[i].push(p_sec[i]);
    }
    for (k, &(i, j, c)) in phase.ties().iter().enumerate() {
        let angle = delta[i] - delta[j];
        traj.tie_flow[k].push(c * angle.sin());
        traj.tie_flow_rate[k].push(c * angle.cos() * (omega[i] - omega[j]));
    }
}

/// Runs independent scenarios, in parallel when enabled. Output order
/// matches input order.
pub fn integrate_batch(scenarios: &[Scenario], exec: Execution) -> Vec<Result<Trajectory, SimError>> {
    par::map(scenarios, exec, integrate)
}
