//! Acceptance criteria 1–8. Runs without the libtest harness so that one
//! PASS/FAIL line per criterion is always printed; exits non-zero if any
//! criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swingsim::analytics::{duration_below, inertia_series, res_share_series, DispatchRecord, Direction, InertiaAssumptions};
use swingsim::config::{parse_config, ConfigFile};
use swingsim::engine::{extract_metrics, integrate, integrate_batch, AreaControls, Metrics, Scenario};
use swingsim::model::{validate, AreaParams, GridModel, TieLine};
use swingsim::par::Execution;
use swingsim::region::{estimate_region, phase_trajectory, Label, RegionMap};
use swingsim::swing::{aggregate_inertia, tie_flow, AreaState, PhaseModel};

macro_rules! bundled {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../configs/", $name, ".json")))
    };
}

type Outcome = Result<String, String>;

fn load((name, text): (&str, &str)) -> ConfigFile {
    parse_config(text, &[]).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn simulate(cfg: &ConfigFile) -> (Metrics, swingsim::Trajectory, Duration) {
    let model = cfg.model().unwrap();
    let scenario = cfg.scenario(&model).unwrap();
    let (traj, elapsed) = timed(|| integrate(&scenario).unwrap());
    let metrics = extract_metrics(&traj, &[49.5]).unwrap();
    (metrics, traj, elapsed)
}

fn criterion_1() -> Outcome {
    let cases = [
        (bundled!("one_area_h6"), false),
        (bundled!("one_area_h3"), true),
        (bundled!("one_area_h3_fast"), false),
    ];
    let mut notes = Vec::new();
    for (cfg, crosses) in cases {
        let c = load(cfg);
        let s = c.scenario.as_ref().unwrap();
        ensure(s.dt == 0.01 && s.horizon == 400.0, || format!("{}: unexpected resolution", cfg.0))?;
        let (m, _, elapsed) = simulate(&c);
        let nadir = m.system_nadir();
        ensure((nadir < 49.5) == crosses, || format!("{}: nadir {nadir:.4} Hz", cfg.0))?;
        ensure(elapsed < Duration::from_secs(5), || format!("{}: took {elapsed:?}", cfg.0))?;
        notes.push(format!("{} nadir {nadir:.3} Hz in {:.2} s", cfg.0, elapsed.as_secs_f64()));
    }
    Ok(notes.join("; "))
}

fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    for (cfg, h) in [(bundled!("one_area_h6"), 6.0), (bundled!("one_area_h3"), 3.0)] {
        let c = load(cfg);
        let model = c.model().unwrap();
        let scenario = c.scenario(&model).unwrap().with_resolution(0.01, 1).unwrap();
        let traj = integrate(&scenario).unwrap();
        let onset = extract_metrics(&traj, &[]).unwrap().areas[0].onset_rocof.unwrap().abs();
        // Hand evaluation of the aggregated swing equation at the fault instant.
        let area = &c.grid.areas[0];
        let analytic = 50.0 * 3000.0 / (2.0 * h * area.s_base);
        let rel = (onset - analytic).abs() / analytic;
        ensure(rel < 0.01, || format!("H = {h}: simulated {onset:.6} vs {analytic:.6} Hz/s"))?;
        notes.push(format!("H = {h} s: {onset:.6} vs {analytic:.6} Hz/s ({:.3} %)", rel * 100.0));
    }
    Ok(notes.join("; "))
}

fn two_area_runs() -> Vec<(f64, Metrics, swingsim::Trajectory, Duration)> {
    [
        (1.0, bundled!("two_area_hII_1")),
        (3.0, bundled!("two_area_hII_3")),
        (6.0, bundled!("two_area_hII_6")),
    ]
    .into_iter()
    .map(|(h, cfg)| {
        let (m, t, d) = simulate(&load(cfg));
        (h, m, t, d)
    })
    .collect()
}

fn criterion_3() -> Outcome {
    let runs = two_area_runs();
    let peaks: Vec<f64> = runs.iter().map(|r| r.1.ties[0].peak_flow).collect();
    let rates: Vec<f64> = runs.iter().map(|r| r.1.ties[0].peak_flow_rate).collect();
    ensure(peaks[0] > peaks[1] && peaks[1] > peaks[2], || format!("peaks {peaks:?} not decreasing"))?;
    let ratio = peaks[0] / peaks[2];
    let rate_ratio = rates[0] / rates[2];
    ensure(ratio > 1.5, || format!("peak ratio {ratio:.3}"))?;
    ensure(rate_ratio > 2.0, || format!("rate ratio {rate_ratio:.3}"))?;
    for r in &runs {
        ensure(r.3 < Duration::from_secs(10), || format!("H_II = {}: took {:?}", r.0, r.3))?;
    }
    Ok(format!(
        "peaks {:.0}/{:.0}/{:.0} MW, ratio {ratio:.2}, rate ratio {rate_ratio:.2}",
        peaks[0], peaks[1], peaks[2]
    ))
}

fn criterion_4() -> Outcome {
    let mut worst_f = 0.0f64;
    let mut worst_tie = 0.0f64;
    for (h, _, traj, _) in two_area_runs() {
        let f = traj.f_dev.iter().map(|s| s.last().unwrap().abs()).fold(0.0, f64::max);
        let tie = traj.tie_flow[0].last().unwrap().abs();
        let sec_peak = traj.p_sec.iter().flatten().fold(0.0f64, |m, p| m.max(p.abs()));
        ensure(sec_peak < 14_000.0, || format!("H_II = {h}: secondary reserve exhausted"))?;
        ensure(f < 1e-3, || format!("H_II = {h}: final |Δf| {f:.2e} Hz"))?;
        ensure(tie < 10.0, || format!("H_II = {h}: final tie deviation {tie:.2} MW"))?;
        worst_f = worst_f.max(f);
        worst_tie = worst_tie.max(tie);
    }
    Ok(format!("worst final |Δf| {worst_f:.1e} Hz, worst tie deviation {worst_tie:.1e} MW"))
}

fn region_of(cfg: (&str, &str)) -> (RegionMap, ConfigFile, Duration) {
    let c = load(cfg);
    let model = c.model().unwrap();
    let spec = c.region.clone().unwrap();
    let (map, elapsed) = timed(|| estimate_region(&model, &model.load_damping_per_rad(), &spec, Execution::Parallel).unwrap());
    (map, c, elapsed)
}

fn criterion_5() -> Outcome {
    let (base, base_cfg, t_base) = region_of(bundled!("region_baseline"));
    let (damped, damped_cfg, t_damped) = region_of(bundled!("region_double_damping"));
    let spec = base_cfg.region.as_ref().unwrap();
    ensure(spec == damped_cfg.region.as_ref().unwrap(), || "grids differ".into())?;
    ensure(spec.x1_samples == 101 && spec.x2_samples == 101, || "grid is not 101×101".into())?;
    for (a, b) in base_cfg.grid.areas.iter().zip(&damped_cfg.grid.areas).filter(|(a, _)| !a.reference) {
        ensure(b.h == a.h && b.k_load == 2.0 * a.k_load, || "damped map is not (M0, 2·k0)".into())?;
    }

    let axis_base = base.x2_axis();
    let axis_damped = damped.x2_axis();
    ensure(base.x1[base.x1_axis_index()] == 0.0, || "x1 = 0 is not a grid column".into())?;
    for ((x2, lb), (_, ld)) in axis_base.iter().zip(&axis_damped) {
        ensure(*lb != Label::Converged || *ld == Label::Converged, || {
            format!("x2 = {x2}: converged at k0 but not at 2·k0")
        })?;
    }
    ensure(base.is_point_symmetric() && damped.is_point_symmetric(), || "map not symmetric".into())?;
    let origin = |m: &RegionMap| m.label(m.x1_axis_index(), nearest_zero(&m.x2));
    ensure(origin(&base) == Label::Converged && origin(&damped) == Label::Converged, || "origin not converged".into())?;
    let limit = Duration::from_secs(60);
    ensure(t_base < limit && t_damped < limit, || format!("took {t_base:?} / {t_damped:?}"))?;
    let extent = |m: &RegionMap| m.summary().x2_axis_extent.map_or(0.0, |e| e[1]);
    Ok(format!(
        "x2-axis extent {:.2} → {:.2} Hz; maps in {:.1} s / {:.1} s",
        extent(&base),
        extent(&damped),
        t_base.as_secs_f64(),
        t_damped.as_secs_f64()
    ))
}

fn nearest_zero(xs: &[f64]) -> usize {
    (0..xs.len()).min_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs())).unwrap()
}

fn criterion_6() -> Outcome {
    let run = |cfg| {
        let c = load(cfg);
        let p = c.phase.as_ref().unwrap();
        phase_trajectory(&c.model().unwrap(), None, &p.events, p.horizon, p.dt, p.band_hz).unwrap()
    };
    let a = run(bundled!("phase_high_inertia_low_damping"));
    let c = run(bundled!("phase_low_inertia_high_damping"));
    let b = run(bundled!("phase_low_inertia_low_damping"));
    ensure(a.max_abs_x2 < c.max_abs_x2 && c.max_abs_x2 < b.max_abs_x2, || {
        format!("max |x2| {:.4} / {:.4} / {:.4}", a.max_abs_x2, c.max_abs_x2, b.max_abs_x2)
    })?;
    let crossed = |t: &swingsim::region::PhaseTrace| t.band_exceeded.iter().any(|&x| x);
    ensure(!crossed(&a) && !crossed(&c) && crossed(&b), || "0.5 Hz band pattern differs".into())?;
    Ok(format!(
        "max |x2| a {:.3} < c {:.3} < b {:.3} Hz; max |Δf_1| {:.3} / {:.3} / {:.3} Hz",
        a.max_abs_x2, c.max_abs_x2, b.max_abs_x2, a.max_abs_f_dev[0], c.max_abs_f_dev[0], b.max_abs_f_dev[0]
    ))
}

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<DispatchRecord> {
    let mut t = NaiveDateTime::parse_from_str("2016-01-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
    (0..n)
        .map(|_| {
            let step = [15, 30, 60, 60, 60, 120][rng.gen_range(0..6)];
            t += chrono::Duration::minutes(step);
            let zero_res = rng.gen_bool(0.1);
            DispatchRecord {
                timestamp: t,
                conventional_mw: rng.gen_range(1.0..80_000.0),
                wind_mw: if zero_res { 0.0 } else { rng.gen_range(0.0..40_000.0) },
                pv_mw: if zero_res { 0.0 } else { rng.gen_range(0.0..30_000.0) },
                other_res_mw: None,
                load_mw: rng.gen_range(30_000.0..90_000.0),
            }
        })
        .collect()
}

/// Per-sample interval in hours, found by brute force: the gap to the next
/// sample, and for the last one the gap value that occurs most often
/// (smallest on ties), counted pairwise.
fn oracle_intervals(times: &[NaiveDateTime]) -> Vec<f64> {
    let gaps: Vec<f64> = (0..times.len() - 1)
        .map(|k| (times[k + 1] - times[k]).num_seconds() as f64 / 3600.0)
        .collect();
    let mut modal = 1.0;
    let mut best = 0;
    for &g in &gaps {
        let count = gaps.iter().filter(|&&x| x == g).count();
        if count > best || (count == best && g < modal) {
            best = count;
            modal = g;
        }
    }
    let mut w = gaps;
    w.push(modal);
    w
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let entries: Vec<(f64, f64)> = (0..1000).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(1.0..5000.0))).collect();
    let (h, s) = aggregate_inertia(&entries).map_err(|e| e.to_string())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(hi, si) in entries.iter().rev() {
        num += hi * si;
        den += si;
    }
    ensure(rel_close(h, num / den) && rel_close(s, den), || format!("aggregate {h} vs {}", num / den))?;

    let records = random_records(&mut rng, 1000);
    let share = res_share_series(&records).map_err(|e| e.to_string())?;
    for (r, v) in records.iter().zip(&share.values) {
        let oracle = (r.wind_mw + r.pv_mw) * 100.0 / r.load_mw;
        ensure(rel_close(*v, oracle), || format!("share {v} vs {oracle}"))?;
    }

    let assumptions = InertiaAssumptions { h_conv: 6.0, h_res: 0.5 };
    let inertia = inertia_series(&records, assumptions).map_err(|e| e.to_string())?;
    for (r, v) in records.iter().zip(&inertia.values) {
        let res = r.wind_mw + r.pv_mw;
        let oracle = (6.0 * r.conventional_mw + 0.5 * res) / (r.conventional_mw + res);
        ensure(rel_close(*v, oracle), || format!("inertia {v} vs {oracle}"))?;
    }

    let weights = oracle_intervals(&inertia.time);
    for threshold in [1.0, 3.0, 4.0, 5.5, f64::INFINITY] {
        let got = duration_below(&inertia, threshold, Direction::Below).map_err(|e| e.to_string())?;
        let mut hours = 0.0;
        for (k, v) in inertia.values.iter().enumerate() {
            if *v < threshold {
                hours += weights[k];
            }
        }
        ensure(rel_close(got.hours, hours), || format!("below {threshold}: {} vs {hours}", got.hours))?;
    }
    let above = duration_below(&share, 30.0, Direction::AtOrAbove).map_err(|e| e.to_string())?;
    let oracle: f64 = (0..share.len()).filter(|&k| share.values[k] >= 30.0).map(|k| weights[k]).sum();
    ensure(rel_close(above.hours, oracle), || format!("share ≥ 30 %: {} vs {oracle}", above.hours))?;
    Ok("aggregate_inertia, res_share_series, inertia_series, duration_below agree on 1000-point fixtures".into())
}

fn three_area() -> swingsim::ValidatedGridModel {
    let area = |id: &str, h: f64| AreaParams {
        id: id.into(),
        h,
        s_base: 115_000.0,
        k_load: 1.5,
        reference: false,
        primary: Default::default(),
        secondary: Default::default(),
    };
    validate(&GridModel {
        f0: 50.0,
        areas: vec![area("1", 6.0), area("2", 3.0), area("3", 4.5)],
        ties: vec![
            TieLine { from: "1".into(), to: "2".into(), rating: 2875.0, coupling: Some(8625.0) },
            TieLine { from: "2".into(), to: "3".into(), rating: 2875.0, coupling: Some(5000.0) },
            TieLine { from: "1".into(), to: "3".into(), rating: 2875.0, coupling: None },
        ],
    })
    .unwrap()
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();

    // Tie-flow antisymmetry, pointwise and in the net exports.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = three_area();
    let phase = PhaseModel::with_load_damping(&model).map_err(|e| e.to_string())?;
    for _ in 0..1000 {
        let (a, b, c) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(0.0..1e5));
        ensure(tie_flow(a, b, c) == -tie_flow(b, a, c), || format!("tie_flow({a}, {b}, {c})"))?;
        let delta = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
        let mut exports = [0.0; 3];
        phase.tie_exports(&delta, &mut exports);
        ensure(exports.iter().sum::<f64>().abs() < 1e-9 * 20_000.0, || format!("exports {exports:?}"))?;
    }
    notes.push("antisymmetry ok".to_string());

    // Equilibrium: no events, every bundled scenario stays exactly at rest.
    for cfg in [bundled!("one_area_h3"), bundled!("two_area_hII_1"), bundled!("three_area_triangle")] {
        let c = load(cfg);
        let model = c.model().unwrap();
        let s = Scenario::builder(model).horizon(200.0).build().unwrap();
        let t = integrate(&s).unwrap();
        let still = t.f_dev.iter().chain(&t.delta).chain(&t.p_prim).chain(&t.p_sec).flatten().all(|&x| x == 0.0);
        ensure(still, || format!("{} drifts without events", cfg.0))?;
    }
    notes.push("fixed points ok".to_string());

    // dt halving.
    let mut worst_shift = 0.0f64;
    for cfg in [bundled!("one_area_h3"), bundled!("two_area_hII_1")] {
        let c = load(cfg);
        let model = c.model().unwrap();
        let s = c.scenario(&model).unwrap();
        let coarse = extract_metrics(&integrate(&s.with_resolution(0.01, 1).unwrap()).unwrap(), &[]).unwrap();
        let fine = extract_metrics(&integrate(&s.with_resolution(0.005, 2).unwrap()).unwrap(), &[]).unwrap();
        for (a, b) in coarse.areas.iter().zip(&fine.areas) {
            let shift = (a.nadir - b.nadir).abs();
            ensure(shift < 1e-4, || format!("{} area {}: nadir shift {shift:.2e} Hz", cfg.0, a.id))?;
            worst_shift = worst_shift.max(shift);
        }
    }
    notes.push(format!("dt halving shifts nadirs ≤ {worst_shift:.1e} Hz"));

    // Undamped energy conservation.
    let energy_model = PhaseModel::new(&model, &[0.0; 3]).map_err(|e| e.to_string())?;
    let s = Scenario::builder(model.clone())
        .damping(vec![0.0; 3])
        .horizon(200.0)
        .record_stride(1)
        .all_controls(AreaControls::DISABLED)
        .initial_state(vec![
            AreaState { delta: 0.6, f_dev: 0.0 },
            AreaState { delta: -0.4, f_dev: 0.2 },
            AreaState { delta: 0.0, f_dev: -0.1 },
        ])
        .build()
        .unwrap();
    let t = integrate(&s).unwrap();
    let energy_at = |k: usize| {
        let mut state = vec![0.0; 6];
        for i in 0..3 {
            state[i] = t.delta[i][k];
            state[3 + i] = 2.0 * PI * t.f_dev[i][k];
        }
        energy_model.energy(&state, &[0.0; 3])
    };
    let e0 = energy_at(0);
    let drift = (0..t.len()).map(|k| (energy_at(k) - e0).abs()).fold(0.0, f64::max) / e0;
    ensure(drift < 1e-6, || format!("relative energy drift {drift:.2e}"))?;
    notes.push(format!("energy drift {drift:.1e}"));

    // Determinism.
    let scenarios: Vec<Scenario> = [bundled!("one_area_h3"), bundled!("two_area_hII_3"), bundled!("three_area_string")]
        .into_iter()
        .map(|cfg| {
            let c = load(cfg);
            c.scenario(&c.model().unwrap()).unwrap()
        })
        .collect();
    let first = integrate_batch(&scenarios, Execution::Parallel);
    let second = integrate_batch(&scenarios, Execution::Sequential);
    let bits = |r: &[Result<swingsim::Trajectory, _>]| -> Vec<u64> {
        r.iter()
            .flat_map(|t| {
                let t = t.as_ref().unwrap();
                t.f_dev.iter().chain(&t.delta).chain(&t.tie_flow).flatten().map(|x| x.to_bits()).collect::<Vec<_>>()
            })
            .collect()
    };
    ensure(bits(&first) == bits(&second), || "reruns differ".into())?;
    notes.push("bit-identical reruns".to_string());
    Ok(notes.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 one-area 49.5 Hz classification", criterion_1),
        ("2 initial RoCoF", criterion_2),
        ("3 two-area tie transients", criterion_3),
        ("4 secondary-control restoration", criterion_4),
        ("5 stability-region properties", criterion_5),
        ("6 phase-plot excursions", criterion_6),
        ("7 analytics oracle equivalence", criterion_7),
        ("8 property suites", criterion_8),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
