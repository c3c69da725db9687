//! Swing-equation right-hand sides and inertia aggregation.
//!
//! Two formulations are provided:
//!
//! - the linearised aggregated swing equation of a single area in terms of
//!   the frequency deviation `Δf` (Hz), see [`ase_delta_rhs`];
//! - the nonlinear multi-area phase model in angle `δ_i` (rad) and angular
//!   speed deviation `ω_i = 2π·Δf_i` (rad/s), see [`PhaseModel`]:
//!
//! ```text
//! dδ_i/dt = ω_i
//! dω_i/dt = (ΔP_i − k_i·ω_i − Σ_j C_ij·sin(δ_i − δ_j)) / M_i
//! ```
//!
//! Both agree for an isolated area when `k_i` is the load damping converted
//! with [`crate::model::damping_per_rad`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{m_from_h, AreaParams, ValidatedGridModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwingError {
    #[error("area `{0}` has zero inertia; its swing equation is singular")]
    ZeroInertia(String),
    #[error("aggregation needs at least one entry")]
    EmptyEntryList,
    #[error("entry {index}: base power must be positive, got {value}")]
    NonPositiveBasePower { index: usize, value: f64 },
    #[error("total inertia weight is zero")]
    ZeroTotalInertia,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Angle and frequency deviation of one area.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaState {
    /// Unwrapped rotor/voltage angle, rad.
    pub delta: f64,
    /// Frequency deviation from nominal, Hz.
    pub f_dev: f64,
}

impl AreaState {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f_dev
    }

    /// Angle wrapped to (−π, π] for reporting.
    pub fn wrapped_delta(&self) -> f64 {
        wrap_angle(self.delta)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Derivative of the frequency deviation in the linearised aggregated swing
/// equation with zero loss change, Hz/s.
///
/// `net_power` is `ΔP_m − ΔP_load` in MW.
pub fn ase_delta_rhs(f_dev: f64, net_power: f64, area: &AreaParams, f0: f64) -> Result<f64, SwingError> {
    if area.h <= 0.0 {
        return Err(SwingError::ZeroInertia(area.id.clone()));
    }
    let gain = f0 / (2.0 * area.h * area.s_base);
    Ok(gain * (net_power - area.load_damping() * f_dev))
}

/// Power flowing from `i` to `j` over a tie with the given coupling, MW.
#[inline]
pub fn tie_flow(delta_i: f64, delta_j: f64, coupling: f64) -> f64 {
    coupling * (delta_i - delta_j).sin()
}

/// Precomputed coefficients of the nonlinear multi-area phase model.
///
/// Reference areas are pinned (`δ`, `ω` held at their current values, zero
/// in practice); all other areas need `M_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    inertia: Vec<f64>,
    damping: Vec<f64>,
    dynamic: Vec<bool>,
    ties: Vec<(usize, usize, f64)>,
}

impl PhaseModel {
    /// Builds the phase model with per-area damping `k_i` in MW per rad/s.
    pub fn new(model: &ValidatedGridModel, damping: &[f64]) -> Result<Self, SwingError> {
        let n = model.areas().len();
        if damping.len() != n {
            return Err(SwingError::LengthMismatch {
                expected: n,
                got: damping.len(),
            });
        }
        let mut inertia = Vec::with_capacity(n);
        let mut dynamic = Vec::with_capacity(n);
        for a in model.areas() {
            // f0 was validated positive, so the conversion cannot fail.
            let m = m_from_h(a.h, a.s_base, model.f0()).unwrap_or(0.0);
            if !a.reference && m <= 0.0 {
                return Err(SwingError::ZeroInertia(a.id.clone()));
            }
            inertia.push(m);
            dynamic.push(!a.reference);
        }
        let ties = model
            .ties()
            .iter()
            .zip(model.tie_endpoints())
            .map(|(t, &(i, j))| (i, j, t.effective_coupling()))
            .collect();
        Ok(Self {
            inertia,
            damping: damping.to_vec(),
            dynamic,
            ties,
        })
    }

    /// Phase model with the load damping of every area.
    pub fn with_load_damping(model: &ValidatedGridModel) -> Result<Self, SwingError> {
        Self::new(model, &model.load_damping_per_rad())
    }

    pub fn len(&self) -> usize {
        self.inertia.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inertia.is_empty()
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn is_dynamic(&self, i: usize) -> bool {
        self.dynamic[i]
    }

    /// `(from, to, coupling)` for every tie.
    pub fn ties(&self) -> &[(usize, usize, f64)] {
        &self.ties
    }

    /// Evaluates the model on a packed state `[δ_0..δ_n, ω_0..ω_n]`, writing
    /// the derivative into `out` with the same layout.
    pub fn derivatives(&self, state: &[f64], imbalance: &[f64], out: &mut [f64]) {
        let n = self.len();
        let (delta, omega) = state.split_at(n);
        let (d_delta, d_omega) = out.split_at_mut(n);
        for i in 0..n {
            d_omega[i] = imbalance[i] - self.damping[i] * omega[i];
        }
        for &(i, j, c) in &self.ties {
            let flow = tie_flow(delta[i], delta[j], c);
            d_omega[i] -= flow;
            d_omega[j] += flow;
        }
        for i in 0..n {
            if self.dynamic[i] {
                d_delta[i] = omega[i];
                d_omega[i] /= self.inertia[i];
            } else {
                d_delta[i] = 0.0;
                d_omega[i] = 0.0;
            }
        }
    }

    /// Net tie export of every area, MW.
    pub fn tie_exports(&self, delta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(i, j, c) in &self.ties {
            let flow = tie_flow(delta[i], delta[j], c);
            out[i] += flow;
            out[j] -= flow;
        }
    }

    /// Energy function of the undamped dynamics with constant imbalance:
    /// kinetic energy, tie potential `C·(1 − cos(δ_i − δ_j))`, and the work
    /// `−ΔP_i·δ_i` of the imbalance. Conserved when every `k_i = 0`.
    pub fn energy(&self, state: &[f64], imbalance: &[f64]) -> f64 {
        let n = self.len();
        let (delta, omega) = state.split_at(n);
        let kinetic: f64 = (0..n)
            .filter(|&i| self.dynamic[i])
            .map(|i| 0.5 * self.inertia[i] * omega[i] * omega[i] - imbalance[i] * delta[i])
            .sum();
        let potential: f64 = self
            .ties
            .iter()
            .map(|&(i, j, c)| c * (1.0 - (delta[i] - delta[j]).cos()))
            .sum();
        kinetic + potential
    }
}

/// Per-area `(dδ/dt, dω/dt)` of the nonlinear phase model.
///
/// `damping` holds `k_i` in MW per rad/s and `imbalances` the net power
/// deviations `ΔP_i` in MW.
pub fn multi_area_rhs(
    states: &[AreaState],
    imbalances: &[f64],
    model: &ValidatedGridModel,
    damping: &[f64],
) -> Result<Vec<(f64, f64)>, SwingError> {
    let phase = PhaseModel::new(model, damping)?;
    let n = phase.len();
    for got in [states.len(), imbalances.len()] {
        if got != n {
            return Err(SwingError::LengthMismatch { expected: n, got });
        }
    }
    let mut packed = vec![0.0; 2 * n];
    for (i, s) in states.iter().enumerate() {
        packed[i] = s.delta;
        packed[n + i] = s.omega();
    }
    let mut out = vec![0.0; 2 * n];
    phase.derivatives(&packed, imbalances, &mut out);
    Ok((0..n).map(|i| (out[i], out[n + i])).collect())
}

/// Aggregates `(H_i, S_B,i)` pairs into `(H, S_B)` with
/// `S_B = Σ S_B,i` and `H = Σ H_i·S_B,i / S_B`.
pub fn aggregate_inertia(entries: &[(f64, f64)]) -> Result<(f64, f64), SwingError> {
    if entries.is_empty() {
        return Err(SwingError::EmptyEntryList);
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (index, &(h, s)) in entries.iter().enumerate() {
        if s.is_nan() || s <= 0.0 {
            return Err(SwingError::NonPositiveBasePower { index, value: s });
        }
        weighted += h * s;
        total += s;
    }
    Ok((weighted / total, total))
}

/// Centre-of-inertia frequency of `(H_i, S_B,i, f_i)` entries.
pub fn coi_frequency(entries: &[(f64, f64, f64)]) -> Result<f64, SwingError> {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for &(h, s, f) in entries {
        weighted += h * s * f;
        total += h * s;
    }
    if total > 0.0 {
        Ok(weighted / total)
    } else {
        Err(SwingError::ZeroTotalInertia)
    }
}
