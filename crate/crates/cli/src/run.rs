//! The run pipelines behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use swingsim::analytics::{
    duration_below, histogram, inertia_series, ingest_dispatch, res_share_series, AnalyticsError, Direction, Duration,
    HistogramReport,
};
use swingsim::config::{parse_config, ConfigError, ConfigFile, Format};
use swingsim::engine::{extract_metrics, integrate, metrics_json, write_trajectory_csv, SimError};
use swingsim::par::Execution;
use swingsim::region::{estimate_region, phase_trajectory, RegionError, RegionSummary};

use crate::bundled;
use crate::manifest::{OutputDir, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {message}")]
    ConfigIo { path: String, message: String },
    #[error("output directory: {0}")]
    OutputDir(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigIo { .. } | CliError::OutputDir(_) => 2,
            _ => 3,
        }
    }

    /// Machine-readable report printed on standard error.
    pub fn report(&self) -> Value {
        let (kind, detail) = match self {
            CliError::Config(ConfigError::Invalid { path, .. }) => ("config", json!({ "path": path })),
            CliError::Config(ConfigError::Override { key, .. }) => ("config", json!({ "key": key })),
            CliError::Config(ConfigError::Scenario(SimError::EventOffGrid { index, time, dt })) => (
                "config",
                json!({ "variant": "EventOffGrid", "event": index, "time": time, "dt": dt }),
            ),
            CliError::Config(_) | CliError::ConfigIo { .. } | CliError::OutputDir(_) => ("config", Value::Null),
            CliError::Sim(_) => ("simulation", Value::Null),
            CliError::Region(_) => ("region", Value::Null),
            CliError::Analytics(AnalyticsError::EmptySeries) => ("analytics", json!({ "variant": "EmptySeries" })),
            CliError::Analytics(_) => ("analytics", Value::Null),
            CliError::Io { path, .. } => ("io", json!({ "path": path })),
        };
        json!({
            "error": {
                "kind": kind,
                "exit_code": self.exit_code(),
                "message": self.to_string(),
                "detail": detail,
            }
        })
    }
}

/// Where a config came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Bundled(String),
}

impl Source {
    /// An existing path wins over a bundled config of the same name.
    pub fn resolve(arg: &str) -> Self {
        let path = Path::new(arg);
        if !path.exists() && bundled::config(arg).is_some() {
            Source::Bundled(arg.strip_suffix(".json").unwrap_or(arg).to_string())
        } else {
            Source::File(path.to_path_buf())
        }
    }

    fn describe(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Bundled(name) => format!("bundled:{name}"),
        }
    }
}

/// Shared options of the run subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub exec: Execution,
}

struct Loaded {
    source: Source,
    config: ConfigFile,
}

impl Loaded {
    fn open(source: Source, opts: &RunOptions) -> Result<Self, CliError> {
        let text = match &source {
            Source::File(p) => fs::read_to_string(p).map_err(|e| CliError::ConfigIo {
                path: p.display().to_string(),
                message: e.to_string(),
            })?,
            Source::Bundled(name) => bundled::config(name).expect("resolved bundled name").to_string(),
        };
        let config = parse_config(&text, &opts.overrides)?;
        Ok(Self { source, config })
    }

    fn output(&self, opts: &RunOptions) -> Result<OutputDir, CliError> {
        OutputDir::prepare(opts.out.as_deref().unwrap_or(&self.config.output.directory))
    }

    fn wants(&self, format: Format) -> bool {
        self.config.output.wants(format)
    }

    fn finish(&self, out: OutputDir, command: &str) -> Result<RunManifest, CliError> {
        let snapshot = serde_json::to_value(&self.config).expect("serialisable config");
        let root = out.root().display().to_string();
        let manifest = out.finish(command, &self.source.describe(), snapshot)?;
        log::info!("{command}: {} outputs in {root}", manifest.outputs.len());
        Ok(manifest)
    }

    fn read_dispatch(&self, file: &Path) -> Result<String, CliError> {
        let unreadable = |path: &Path, e: std::io::Error| CliError::ConfigIo {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        match &self.source {
            Source::File(cfg) => {
                let path = cfg.parent().unwrap_or(Path::new(".")).join(file);
                fs::read_to_string(&path).map_err(|e| unreadable(&path, e))
            }
            Source::Bundled(_) => match file.to_str().and_then(bundled::fixture) {
                Some(text) => Ok(text.to_string()),
                None => fs::read_to_string(file).map_err(|e| unreadable(file, e)),
            },
        }
    }
}

fn csv_bytes<E: std::fmt::Debug>(write: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing CSV to memory");
    buf
}

pub fn run_simulate(source: Source, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let loaded = Loaded::open(source, opts)?;
    let model = loaded.config.model()?;
    let scenario = loaded.config.scenario(&model)?;
    let section = loaded.config.scenario.as_ref().expect("checked by scenario()");
    let mut out = loaded.output(opts)?;

    let traj = integrate(&scenario)?;
    let metrics = extract_metrics(&traj, &section.thresholds)?;
    for a in &metrics.areas {
        log::info!("area {}: nadir {:.4} Hz, max RoCoF {:.4} Hz/s", a.id, a.nadir, a.max_rocof);
    }
    if loaded.wants(Format::Csv) {
        out.write("trajectory.csv", &csv_bytes(|b| write_trajectory_csv(&traj, b)))?;
    }
    if loaded.wants(Format::Json) {
        out.write_json("metrics.json", &metrics_json(&metrics))?;
    }
    loaded.finish(out, "simulate")
}

pub fn run_region(source: Source, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let loaded = Loaded::open(source, opts)?;
    let spec = loaded.config.region.as_ref().ok_or(ConfigError::MissingSection("region"))?;
    let model = loaded.config.model()?;
    let mut out = loaded.output(opts)?;

    let map = estimate_region(&model, &model.load_damping_per_rad(), spec, opts.exec)?;
    let summary: RegionSummary = map.summary();
    log::info!(
        "region: {} converged, {} diverged, {} undecided",
        summary.converged,
        summary.diverged,
        summary.undecided
    );
    if loaded.wants(Format::Csv) {
        out.write("region.csv", &csv_bytes(|b| map.write_csv(b)))?;
    }
    if loaded.wants(Format::Json) {
        out.write_json("region_summary.json", &summary)?;
    }
    loaded.finish(out, "region")
}

#[derive(Serialize)]
struct PhaseSummary {
    areas: [String; 2],
    band_hz: f64,
    max_abs_x2_hz: f64,
    max_abs_f_dev_hz: [f64; 2],
    band_exceeded: [bool; 2],
    final_x1_rad: f64,
    final_x2_hz: f64,
}

pub fn run_phase(source: Source, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let loaded = Loaded::open(source, opts)?;
    let phase = loaded.config.phase.as_ref().ok_or(ConfigError::MissingSection("phase"))?;
    let model = loaded.config.model()?;
    let mut out = loaded.output(opts)?;

    let trace = phase_trajectory(&model, None, &phase.events, phase.horizon, phase.dt, phase.band_hz)?;
    let last = trace.points.last().expect("non-empty trace");
    let summary = PhaseSummary {
        areas: trace.area_ids.clone(),
        band_hz: trace.band_hz,
        max_abs_x2_hz: trace.max_abs_x2,
        max_abs_f_dev_hz: trace.max_abs_f_dev,
        band_exceeded: trace.band_exceeded,
        final_x1_rad: last.x1,
        final_x2_hz: last.x2,
    };
    log::info!("phase: max |x2| {:.4} Hz, band exceeded {:?}", summary.max_abs_x2_hz, summary.band_exceeded);
    if loaded.wants(Format::Csv) {
        out.write("phase.csv", &csv_bytes(|b| trace.write_csv(b)))?;
    }
    if loaded.wants(Format::Json) {
        out.write_json("phase_summary.json", &summary)?;
    }
    loaded.finish(out, "phase")
}

#[derive(Serialize)]
struct ThresholdStat {
    threshold: f64,
    #[serde(flatten)]
    duration: Duration,
}

#[derive(Serialize)]
struct InertiaReport {
    records: usize,
    span_hours: f64,
    inertia_histogram: HistogramReport,
    inertia_below: ThresholdStat,
    min_inertia_s: f64,
    share_histogram: HistogramReport,
    share_at_or_above: ThresholdStat,
    max_share_pct: f64,
}

pub fn run_inertia(source: Source, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let loaded = Loaded::open(source, opts)?;
    let section = loaded.config.analytics.as_ref().ok_or(ConfigError::MissingSection("analytics"))?;
    let text = loaded.read_dispatch(&section.dispatch)?;
    let mut out = loaded.output(opts)?;

    let records = ingest_dispatch(text.as_bytes())?;
    let inertia = inertia_series(&records, section.assumptions)?;
    let share = res_share_series(&records)?;
    let report = InertiaReport {
        records: records.len(),
        span_hours: inertia.span_hours(),
        inertia_histogram: histogram(&inertia, &section.inertia_edges, opts.exec)?,
        inertia_below: ThresholdStat {
            threshold: section.inertia_threshold,
            duration: duration_below(&inertia, section.inertia_threshold, Direction::Below)?,
        },
        min_inertia_s: inertia.values.iter().copied().fold(f64::INFINITY, f64::min),
        share_histogram: histogram(&share, &section.share_edges, opts.exec)?,
        share_at_or_above: ThresholdStat {
            threshold: section.share_threshold,
            duration: duration_below(&share, section.share_threshold, Direction::AtOrAbove)?,
        },
        max_share_pct: share.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    log::info!(
        "inertia: {:.0} h below {} s, {:.0} h at or above {} %",
        report.inertia_below.duration.hours,
        section.inertia_threshold,
        report.share_at_or_above.duration.hours,
        section.share_threshold
    );
    if loaded.wants(Format::Csv) {
        out.write("inertia_series.csv", &csv_bytes(|b| inertia.write_csv("h_agg_s", b)))?;
        out.write("res_share_series.csv", &csv_bytes(|b| share.write_csv("res_share_pct", b)))?;
    }
    if loaded.wants(Format::Json) {
        out.write_json("inertia_report.json", &report)?;
    }
    loaded.finish(out, "inertia")
}

/// Writes every bundled config and fixture into `dir`.
pub fn export_bundled(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path, e: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let files = bundled::CONFIGS
        .iter()
        .map(|(name, _, text)| (format!("{name}.json"), *text))
        .chain(bundled::FIXTURES.iter().map(|(name, text)| (name.to_string(), *text)));
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
