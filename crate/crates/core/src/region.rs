//! Region-of-attraction maps and phase-plane traces of the two-area model.
//!
//! A plane point `(x1, x2)` with `x1 = δ_a − δ_b` (rad) and `x2 = f_a − f_b`
//! (Hz) is embedded into the full state by a symmetric split:
//! `δ_a = x1/2`, `δ_b = −x1/2`, `Δf_a = x2/2`, `Δf_b = −x2/2`, with any
//! reference area held at zero. The autonomous system is then simulated and
//! the point labelled by where the trajectory ends up.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{integrate, AreaControls, Event, EventKind, Scenario, SimError};
use crate::model::ValidatedGridModel;
use crate::ode::Rk4;
use crate::par::{self, Execution};
use crate::swing::{wrap_angle, PhaseModel, SwingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("region spec `{field}` is invalid: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("expected exactly two dynamic areas, found {0}")]
    NotTwoArea(usize),
    #[error(transparent)]
    Swing(#[from] SwingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sampling grid and classification settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// `[min, max]` of the angle difference, rad.
    pub x1_range: [f64; 2],
    pub x1_samples: usize,
    /// `[min, max]` of the frequency difference, Hz.
    pub x2_range: [f64; 2],
    pub x2_samples: usize,
    /// Convergence band, rad for `x1` and Hz for `x2`.
    pub epsilon: f64,
    /// Latest time at which the band may be entered, s.
    pub t_max: f64,
    /// Integration step, s.
    #[serde(default = "default_region_dt")]
    pub dt: f64,
    /// Time the state must stay in the band, s.
    #[serde(default = "default_hold_time")]
    pub hold_time: f64,
    /// `|x1|` beyond which a point counts as diverged (pole slip), rad.
    #[serde(default = "default_unwrap_bound")]
    pub unwrap_bound: f64,
}

fn default_region_dt() -> f64 {
    0.02
}

fn default_hold_time() -> f64 {
    5.0
}

fn default_unwrap_bound() -> f64 {
    2.0 * PI
}

impl RegionSpec {
    /// Grid with the default step, hold time and unwrap bound.
    pub fn new(x1_range: [f64; 2], x1_samples: usize, x2_range: [f64; 2], x2_samples: usize, epsilon: f64, t_max: f64) -> Self {
        Self {
            x1_range,
            x1_samples,
            x2_range,
            x2_samples,
            epsilon,
            t_max,
            dt: default_region_dt(),
            hold_time: default_hold_time(),
            unwrap_bound: default_unwrap_bound(),
        }
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        let bad = |field, reason: String| Err(RegionError::InvalidSpec { field, reason });
        for (field, [lo, hi]) in [("x1_range", self.x1_range), ("x2_range", self.x2_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(field, format!("[{lo}, {hi}] is empty"));
            }
        }
        for (field, n) in [("x1_samples", self.x1_samples), ("x2_samples", self.x2_samples)] {
            if n < 2 {
                return bad(field, format!("need at least 2 samples, got {n}"));
            }
        }
        for (field, v) in [
            ("epsilon", self.epsilon),
            ("t_max", self.t_max),
            ("dt", self.dt),
            ("unwrap_bound", self.unwrap_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        if !(self.hold_time.is_finite() && self.hold_time >= 0.0) {
            return bad("hold_time", format!("must be non-negative, got {}", self.hold_time));
        }
        Ok(())
    }

    pub fn x1_axis(&self) -> Vec<f64> {
        axis(self.x1_range, self.x1_samples)
    }

    pub fn x2_axis(&self) -> Vec<f64> {
        axis(self.x2_range, self.x2_samples)
    }
}

/// Evenly spaced samples. Written so that a range symmetric about zero gives
/// exactly negated values at mirrored indices.
fn axis([lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let i = i as f64;
            (lo * (last - i) + hi * i) / last
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Converged,
    Diverged,
    Undecided,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Converged => "converged",
            Label::Diverged => "diverged",
            Label::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub label: Label,
    /// Time the state entered the convergence band for good, s.
    pub time_to_converge: Option<f64>,
}

/// The two free areas of a reduced model and its phase dynamics.
#[derive(Debug, Clone)]
struct PlaneSystem {
    phase: PhaseModel,
    a: usize,
    b: usize,
}

impl PlaneSystem {
    fn new(model: &ValidatedGridModel, damping: &[f64]) -> Result<Self, RegionError> {
        let dynamic = model.dynamic_areas();
        let [a, b] = dynamic[..] else {
            return Err(RegionError::NotTwoArea(dynamic.len()));
        };
        Ok(Self {
            phase: PhaseModel::new(model, damping)?,
            a,
            b,
        })
    }

    fn classify(&self, (x1, x2): (f64, f64), spec: &RegionSpec) -> Classification {
        let n = self.phase.len();
        let (a, b) = (self.a, self.b);
        let two_pi = 2.0 * PI;
        let mut y = vec![0.0; 2 * n];
        y[a] = 0.5 * x1;
        y[b] = -0.5 * x1;
        y[n + a] = 0.5 * x2 * two_pi;
        y[n + b] = -0.5 * x2 * two_pi;
        let zero = vec![0.0; n];
        let mut rk4 = Rk4::new(2 * n);

        let end = spec.t_max + spec.hold_time;
        let mut entered: Option<f64> = None;
        let mut k = 0usize;
        loop {
            let t = k as f64 * spec.dt;
            let x1 = y[a] - y[b];
            let x2 = (y[n + a] - y[n + b]) / two_pi;
            if !(x1.is_finite() && x2.is_finite()) || x1.abs() > spec.unwrap_bound {
                return Classification {
                    label: Label::Diverged,
                    time_to_converge: None,
                };
            }
            if wrap_angle(x1).abs() < spec.epsilon && x2.abs() < spec.epsilon {
                let since = *entered.get_or_insert(t);
                if since <= spec.t_max && t - since >= spec.hold_time {
                    return Classification {
                        label: Label::Converged,
                        time_to_converge: Some(since),
                    };
                }
            } else {
                entered = None;
            }
            if t >= end || (entered.is_none() && t >= spec.t_max) {
                return Classification {
                    label: Label::Undecided,
                    time_to_converge: None,
                };
            }
            rk4.step(&mut y, spec.dt, |s, ds| self.phase.derivatives(s, &zero, ds));
            k += 1;
        }
    }
}

/// Classifies a single plane point for the autonomous model with damping
/// `k_i` in MW per rad/s.
pub fn classify_point(
    x0: (f64, f64),
    model: &ValidatedGridModel,
    damping: &[f64],
    spec: &RegionSpec,
) -> Result<Classification, RegionError> {
    spec.validate()?;
    Ok(PlaneSystem::new(model, damping)?.classify(x0, spec))
}

/// Labelled sample grid. Point `(i, j)` sits at `(x1[i], x2[j])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMap {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Row-major by `x1` index.
    pub points: Vec<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub x1_samples: usize,
    pub x2_samples: usize,
    pub converged: usize,
    pub diverged: usize,
    pub undecided: usize,
    /// Bounding box of the converged points, `None` if there are none.
    pub converged_x1_extent: Option<[f64; 2]>,
    pub converged_x2_extent: Option<[f64; 2]>,
    /// Converged `x2` extent in the grid column closest to `x1 = 0`.
    pub x2_axis_extent: Option<[f64; 2]>,
}

impl RegionMap {
    pub fn get(&self, i: usize, j: usize) -> Classification {
        self.points[i * self.x2.len() + j]
    }

    pub fn label(&self, i: usize, j: usize) -> Label {
        self.get(i, j).label
    }

    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    /// Index of the `x1` sample nearest to zero.
    pub fn x1_axis_index(&self) -> usize {
        nearest_zero(&self.x1)
    }

    /// Labels along the `x2` axis (the column nearest `x1 = 0`).
    pub fn x2_axis(&self) -> Vec<(f64, Label)> {
        let i = self.x1_axis_index();
        self.x2.iter().enumerate().map(|(j, &x2)| (x2, self.label(i, j))).collect()
    }

    /// True if every point equals its mirror image under `(x1, x2) → (−x1, −x2)`
    /// on a grid symmetric about the origin.
    pub fn is_point_symmetric(&self) -> bool {
        let (n1, n2) = (self.x1.len(), self.x2.len());
        (0..n1).all(|i| (0..n2).all(|j| self.label(i, j) == self.label(n1 - 1 - i, n2 - 1 - j)))
    }

    pub fn summary(&self) -> RegionSummary {
        let mut x1e: Option<[f64; 2]> = None;
        let mut x2e: Option<[f64; 2]> = None;
        let grow = |e: &mut Option<[f64; 2]>, v: f64| {
            *e = Some(match *e {
                None => [v, v],
                Some([lo, hi]) => [lo.min(v), hi.max(v)],
            })
        };
        for (i, &x1) in self.x1.iter().enumerate() {
            for (j, &x2) in self.x2.iter().enumerate() {
                if self.label(i, j) == Label::Converged {
                    grow(&mut x1e, x1);
                    grow(&mut x2e, x2);
                }
            }
        }
        let mut axis = None;
        for (x2, label) in self.x2_axis() {
            if label == Label::Converged {
                grow(&mut axis, x2);
            }
        }
        RegionSummary {
            x1_samples: self.x1.len(),
            x2_samples: self.x2.len(),
            converged: self.count(Label::Converged),
            diverged: self.count(Label::Diverged),
            undecided: self.count(Label::Undecided),
            converged_x1_extent: x1e,
            converged_x2_extent: x2e,
            x2_axis_extent: axis,
        }
    }

    /// CSV with columns `x1,x2,label,time_to_converge` (empty when unset).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "label", "time_to_converge"])?;
        for (i, &x1) in self.x1.iter().enumerate() {
            for (j, &x2) in self.x2.iter().enumerate() {
                let p = self.get(i, j);
                let t = p.time_to_converge.map(|t| t.to_string()).unwrap_or_default();
                w.write_record([x1.to_string(), x2.to_string(), p.label.as_str().to_string(), t])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn nearest_zero(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i)
}

/// Classifies every grid point of `spec`. Points are independent, so they
/// are evaluated in parallel when `exec` allows; the result does not depend
/// on the execution policy.
pub fn estimate_region(
    model: &ValidatedGridModel,
    damping: &[f64],
    spec: &RegionSpec,
    exec: Execution,
) -> Result<RegionMap, RegionError> {
    spec.validate()?;
    let system = PlaneSystem::new(model, damping)?;
    let x1 = spec.x1_axis();
    let x2 = spec.x2_axis();
    let grid: Vec<(f64, f64)> = x1.iter().flat_map(|&a| x2.iter().map(move |&b| (a, b))).collect();
    let points = par::map(&grid, exec, |&p| system.classify(p, spec));
    Ok(RegionMap { x1, x2, points })
}

/// Which part of a phase trace a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    PreFault,
    FaultOn,
    PostClear,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::PreFault => "pre_fault",
            Segment::FaultOn => "fault_on",
            Segment::PostClear => "post_clear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub time: f64,
    pub segment: Segment,
    /// rad
    pub x1: f64,
    /// Hz
    pub x2: f64,
    /// Angle (unwrapped, rad) and frequency deviation (Hz) of the two free
    /// areas.
    pub area_a: (f64, f64),
    pub area_b: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrace {
    pub area_ids: [String; 2],
    pub band_hz: f64,
    pub points: Vec<PhasePoint>,
    pub max_abs_x2: f64,
    /// Peak `|Δf|` of each free area, Hz.
    pub max_abs_f_dev: [f64; 2],
    /// Whether each free area left the `±band_hz` band.
    pub band_exceeded: [bool; 2],
}

impl PhaseTrace {
    pub fn segment(&self, segment: Segment) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().filter(move |p| p.segment == segment).map(|p| (p.x1, p.x2))
    }

    /// CSV with columns `time,segment,x1,x2,delta_<a>,f_dev_<a>,delta_<b>,f_dev_<b>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let [a, b] = &self.area_ids;
        w.write_record([
            "time".to_string(),
            "segment".into(),
            "x1".into(),
            "x2".into(),
            format!("delta_{a}"),
            format!("f_dev_{a}"),
            format!("delta_{b}"),
            format!("f_dev_{b}"),
        ])?;
        for p in &self.points {
            w.write_record([
                p.time.to_string(),
                p.segment.as_str().to_string(),
                p.x1.to_string(),
                p.x2.to_string(),
                p.area_a.0.to_string(),
                p.area_a.1.to_string(),
                p.area_b.0.to_string(),
                p.area_b.1.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time the fault schedule starts and is cleared: the first step imbalance,
/// and the first clearing (explicit or by duration) after it.
fn fault_window(events: &[Event]) -> (Option<f64>, Option<f64>) {
    let start = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::StepImbalance { .. }))
        .map(|e| e.time)
        .reduce(f64::min);
    let Some(t0) = start else {
        return (None, None);
    };
    let clear = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::ClearFault { .. } if e.time >= t0 => Some(e.time),
            EventKind::StepImbalance { duration: Some(d), .. } => Some(e.time + d),
            _ => None,
        })
        .reduce(f64::min);
    (start, clear)
}

/// Runs the faulted two-area model without controllers and returns its
/// phase-plane trace. `damping` overrides the load damping (MW per rad/s).
pub fn phase_trajectory(
    model: &ValidatedGridModel,
    damping: Option<&[f64]>,
    events: &[Event],
    horizon: f64,
    dt: f64,
    band_hz: f64,
) -> Result<PhaseTrace, RegionError> {
    let dynamic = model.dynamic_areas();
    let [a, b] = dynamic[..] else {
        return Err(RegionError::NotTwoArea(dynamic.len()));
    };
    let mut builder = Scenario::builder(model.clone())
        .events(events.to_vec())
        .horizon(horizon)
        .dt(dt)
        .record_stride(1)
        .all_controls(AreaControls::DISABLED);
    if let Some(d) = damping {
        builder = builder.damping(d.to_vec());
    }
    let traj = integrate(&builder.build()?)?;
    let (start, clear) = fault_window(events);

    let mut points = Vec::with_capacity(traj.len());
    let mut max_abs_x2 = 0.0f64;
    let mut max_abs_f = [0.0f64; 2];
    for (k, &t) in traj.time.iter().enumerate() {
        let (da, fa) = (traj.delta[a][k], traj.f_dev[a][k]);
        let (db, fb) = (traj.delta[b][k], traj.f_dev[b][k]);
        let segment = match (start, clear) {
            (Some(s), _) if t < s => Segment::PreFault,
            (None, _) => Segment::PreFault,
            (_, Some(c)) if t >= c => Segment::PostClear,
            _ => Segment::FaultOn,
        };
        let x2 = fa - fb;
        max_abs_x2 = max_abs_x2.max(x2.abs());
        max_abs_f[0] = max_abs_f[0].max(fa.abs());
        max_abs_f[1] = max_abs_f[1].max(fb.abs());
        points.push(PhasePoint {
            time: t,
            segment,
            x1: da - db,
            x2,
            area_a: (da, fa),
            area_b: (db, fb),
        });
    }
    Ok(PhaseTrace {
        area_ids: [model.areas()[a].id.clone(), model.areas()[b].id.clone()],
        band_hz,
        points,
        max_abs_x2,
        max_abs_f_dev: max_abs_f,
        band_exceeded: [max_abs_f[0] > band_hz, max_abs_f[1] > band_hz],
    })
}
