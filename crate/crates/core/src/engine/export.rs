use std::io::Write;

use serde_json::{Map, Value};

use super::{Metrics, Trajectory};
use crate::swing::wrap_angle;

/// Column names of [`write_trajectory_csv`], in order.
pub fn trajectory_csv_header(traj: &Trajectory) -> Vec<String> {
    let mut cols = vec!["time".to_string()];
    for prefix in ["f", "delta", "p_prim", "p_sec"] {
        cols.extend(traj.area_ids.iter().map(|id| format!("{prefix}_{id}")));
    }
    for prefix in ["flow", "flow_rate"] {
        cols.extend(traj.tie_ids.iter().map(|(a, b)| format!("{prefix}_{a}_{b}")));
    }
    cols
}

fn units_line(traj: &Trajectory) -> String {
    let n = traj.area_ids.len();
    let m = traj.tie_ids.len();
    let mut units = vec!["s"];
    for unit in ["Hz", "rad", "MW", "MW"] {
        units.extend(std::iter::repeat_n(unit, n));
    }
    for unit in ["MW", "MW/s"] {
        units.extend(std::iter::repeat_n(unit, m));
    }
    format!("# units: {}", units.join(","))
}

/// Writes the trajectory as CSV: a `# units:` comment line, a header, then one
/// row per sample. Frequencies are absolute, angles wrapped to (−π, π].
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), csv::Error> {
    let mut out = out;
    writeln!(out, "{}", units_line(traj))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_csv_header(traj))?;
    let mut row: Vec<String> = Vec::new();
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.time[k].to_string());
        row.extend(traj.f_dev.iter().map(|s| (traj.f0 + s[k]).to_string()));
        row.extend(traj.delta.iter().map(|s| wrap_angle(s[k]).to_string()));
        row.extend(traj.p_prim.iter().map(|s| s[k].to_string()));
        row.extend(traj.p_sec.iter().map(|s| s[k].to_string()));
        row.extend(traj.tie_flow.iter().map(|s| s[k].to_string()));
        row.extend(traj.tie_flow_rate.iter().map(|s| s[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

/// Flat `"<id>.<metric>"` object, convenient for diffing runs.
pub fn metrics_json(metrics: &Metrics) -> Value {
    let mut map = Map::new();
    for a in &metrics.areas {
        let key = |k: &str| format!("{}.{k}", a.id);
        map.insert(key("nadir_hz"), a.nadir.into());
        map.insert(key("zenith_hz"), a.zenith.into());
        map.insert(key("max_rocof_hz_per_s"), a.max_rocof.into());
        map.insert(key("onset_rocof_hz_per_s"), opt(a.onset_rocof));
        map.insert(key("settling_time_s"), opt(a.settling_time));
        map.insert(key("final_f_dev_hz"), a.final_f_dev.into());
        for c in &a.crossings {
            map.insert(key(&format!("crossing_{}_hz_s", c.threshold)), opt(c.time));
        }
    }
    for t in &metrics.ties {
        let key = |k: &str| format!("{}-{}.{k}", t.from, t.to);
        map.insert(key("peak_flow_mw"), t.peak_flow.into());
        map.insert(key("peak_flow_rate_mw_per_s"), t.peak_flow_rate.into());
        map.insert(key("final_flow_mw"), t.final_flow.into());
    }
    Value::Object(map)
}
