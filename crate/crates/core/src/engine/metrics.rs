//! Post-run metrics computed from a recorded [`Trajectory`].

use serde::Serialize;

use super::{SimError, Trajectory};

/// Band around nominal frequency used for the settling time, Hz.
pub const SETTLING_BAND_HZ: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    /// Absolute frequency threshold, Hz.
    pub threshold: f64,
    /// First time the frequency passes the threshold (moving away from
    /// nominal), linearly interpolated between samples. `None` if never.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaMetrics {
    pub id: String,
    /// Minimum frequency, Hz.
    pub nadir: f64,
    /// Maximum frequency, Hz.
    pub zenith: f64,
    /// Largest |dΔf/dt| by central differences, Hz/s.
    pub max_rocof: f64,
    /// Signed dΔf/dt over the first recorded interval after the first event,
    /// Hz/s.
    pub onset_rocof: Option<f64>,
    /// Time from which |Δf| stays below [`SETTLING_BAND_HZ`]; `None` if the
    /// run ends outside the band.
    pub settling_time: Option<f64>,
    pub crossings: Vec<Crossing>,
    /// Δf at the last sample, Hz.
    pub final_f_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieMetrics {
    pub from: String,
    pub to: String,
    /// Peak |flow deviation|, MW.
    pub peak_flow: f64,
    /// Peak |d flow/dt|, MW/s.
    pub peak_flow_rate: f64,
    /// Flow deviation at the last sample, MW.
    pub final_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub f0: f64,
    pub areas: Vec<AreaMetrics>,
    pub ties: Vec<TieMetrics>,
}

impl Metrics {
    pub fn area(&self, id: &str) -> Option<&AreaMetrics> {
        self.areas.iter().find(|a| a.id == id)
    }

    pub fn tie(&self, from: &str, to: &str) -> Option<&TieMetrics> {
        self.ties.iter().find(|t| t.from == from && t.to == to)
    }

    /// Lowest nadir over all areas, Hz.
    pub fn system_nadir(&self) -> f64 {
        self.areas.iter().map(|a| a.nadir).fold(f64::INFINITY, f64::min)
    }
}

fn central_differences(time: &[f64], values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (values[b] - values[a]) / (time[b] - time[a])
        })
        .collect()
}

fn first_crossing(time: &[f64], freq: &[f64], threshold: f64, f0: f64) -> Option<f64> {
    let below = threshold < f0;
    let beyond = |f: f64| if below { f < threshold } else { f > threshold };
    let k = freq.iter().position(|&f| beyond(f))?;
    if k == 0 {
        return Some(time[0]);
    }
    let (fa, fb) = (freq[k - 1], freq[k]);
    let w = (fa - threshold) / (fa - fb);
    Some(time[k - 1] + w.clamp(0.0, 1.0) * (time[k] - time[k - 1]))
}

fn settling_time(time: &[f64], f_dev: &[f64]) -> Option<f64> {
    match f_dev.iter().rposition(|d| d.abs() >= SETTLING_BAND_HZ) {
        None => Some(time[0]),
        Some(k) if k + 1 < time.len() => Some(time[k + 1]),
        Some(_) => None,
    }
}

/// Computes metrics for every area and tie. `thresholds` are absolute
/// frequencies in Hz; those below `f0` are crossed downwards, the others
/// upwards.
pub fn extract_metrics(traj: &Trajectory, thresholds: &[f64]) -> Result<Metrics, SimError> {
    if traj.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    let time = &traj.time;
    let onset_index = traj
        .event_times
        .iter()
        .copied()
        .reduce(f64::min)
        .and_then(|t0| time.iter().position(|&t| t >= t0 - 1e-9));

    let areas = traj
        .area_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let dev = &traj.f_dev[i];
            let freq: Vec<f64> = traj.frequency(i).collect();
            let rocof = central_differences(time, dev);
            let onset_rocof = onset_index
                .filter(|&k| k + 1 < time.len())
                .map(|k| (dev[k + 1] - dev[k]) / (time[k + 1] - time[k]));
            AreaMetrics {
                id: id.clone(),
                nadir: freq.iter().copied().fold(f64::INFINITY, f64::min).min(traj.f0),
                zenith: freq.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(traj.f0),
                max_rocof: rocof.iter().fold(0.0, |m, r| m.max(r.abs())),
                onset_rocof,
                settling_time: settling_time(time, dev),
                crossings: thresholds
                    .iter()
                    .map(|&threshold| Crossing {
                        threshold,
                        time: first_crossing(time, &freq, threshold, traj.f0),
                    })
                    .collect(),
                final_f_dev: *dev.last().unwrap_or(&0.0),
            }
        })
        .collect();

    let ties = traj
        .tie_ids
        .iter()
        .enumerate()
        .map(|(k, (from, to))| {
            let flow = &traj.tie_flow[k];
            TieMetrics {
                from: from.clone(),
                to: to.clone(),
                peak_flow: flow.iter().fold(0.0, |m, x| m.max(x.abs())),
                peak_flow_rate: traj.tie_flow_rate[k].iter().fold(0.0, |m, x| m.max(x.abs())),
                final_flow: *flow.last().unwrap_or(&0.0),
            }
        })
        .collect();

    Ok(Metrics {
        f0: traj.f0,
        areas,
        ties,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieComparison {
    pub from: String,
    pub to: String,
    pub peak_flow_ratio: f64,
    pub peak_flow_rate_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaComparison {
    pub id: String,
    /// Ratio of nadir depths `f0 − nadir`.
    pub nadir_depth_ratio: f64,
    pub max_rocof_ratio: f64,
}

/// Variant-over-base ratios of two runs on the same topology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub areas: Vec<AreaComparison>,
    pub ties: Vec<TieComparison>,
}

fn ratio(base: f64, variant: f64) -> f64 {
    if base == variant {
        1.0
    } else {
        variant / base
    }
}

pub fn compare_runs(base: &Metrics, variant: &Metrics) -> Result<ComparisonReport, SimError> {
    let ids = |m: &Metrics| m.areas.iter().map(|a| a.id.clone()).collect::<Vec<_>>();
    let ties = |m: &Metrics| m.ties.iter().map(|t| (t.from.clone(), t.to.clone())).collect::<Vec<_>>();
    if ids(base) != ids(variant) {
        return Err(SimError::TopologyMismatch(format!(
            "areas {:?} vs {:?}",
            ids(base),
            ids(variant)
        )));
    }
    if ties(base) != ties(variant) {
        return Err(SimError::TopologyMismatch(format!(
            "ties {:?} vs {:?}",
            ties(base),
            ties(variant)
        )));
    }
    Ok(ComparisonReport {
        areas: base
            .areas
            .iter()
            .zip(&variant.areas)
            .map(|(b, v)| AreaComparison {
                id: b.id.clone(),
                nadir_depth_ratio: ratio(base.f0 - b.nadir, variant.f0 - v.nadir),
                max_rocof_ratio: ratio(b.max_rocof, v.max_rocof),
            })
            .collect(),
        ties: base
            .ties
            .iter()
            .zip(&variant.ties)
            .map(|(b, v)| TieComparison {
                from: b.from.clone(),
                to: b.to.clone(),
                peak_flow_ratio: ratio(b.peak_flow, v.peak_flow),
                peak_flow_rate_ratio: ratio(b.peak_flow_rate, v.peak_flow_rate),
            })
            .collect(),
    })
}
