//! Dispatch time series and the inertia statistics derived from them.
//!
//! Inverter-connected feed-in is wind plus PV. Aggregated inertia weights
//! each technology by its dispatched power in the hour, so a 50/50 split of
//! conventional and inverter-fed generation with the default constants gives
//! 3 s.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::swing::aggregate_inertia;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("dispatch CSV lacks column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp {current} does not follow {previous}")]
    NonMonotoneTimestamps {
        line: u64,
        previous: NaiveDateTime,
        current: NaiveDateTime,
    },
    #[error("line {line}: `{column}` is negative")]
    NegativePower { line: u64, column: &'static str },
    #[error("zero load at {0}")]
    ZeroLoad(NaiveDateTime),
    #[error("zero generation at {0}")]
    ZeroGeneration(NaiveDateTime),
    #[error("series is empty")]
    EmptySeries,
    #[error("bad histogram edges: {0}")]
    BadEdges(String),
    #[error("inertia assumption `{field}` must be non-negative, got {value}")]
    InvalidAssumptions { field: &'static str, value: f64 },
}

/// One dispatch sample. Powers in MW, timestamps in UTC when an offset is
/// given and taken as-is otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub timestamp: NaiveDateTime,
    pub conventional_mw: f64,
    pub wind_mw: f64,
    pub pv_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_res_mw: Option<f64>,
    pub load_mw: f64,
}

impl DispatchRecord {
    /// Wind plus PV, MW.
    pub fn inverter_mw(&self) -> f64 {
        self.wind_mw + self.pv_mw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertiaAssumptions {
    /// Inertia constant of conventional units, s.
    #[serde(default = "default_h_conv")]
    pub h_conv: f64,
    /// Inertia constant of inverter-connected units, s.
    #[serde(default)]
    pub h_res: f64,
}

fn default_h_conv() -> f64 {
    6.0
}

impl Default for InertiaAssumptions {
    fn default() -> Self {
        Self {
            h_conv: default_h_conv(),
            h_res: 0.0,
        }
    }
}

impl InertiaAssumptions {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        for (field, value) in [("h_conv", self.h_conv), ("h_res", self.h_res)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AnalyticsError::InvalidAssumptions { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    timestamp: String,
    conventional_mw: f64,
    wind_mw: f64,
    pv_mw: f64,
    #[serde(default)]
    other_res_mw: Option<f64>,
    load_mw: f64,
}

const REQUIRED_COLUMNS: [&str; 5] = ["timestamp", "conventional_mw", "wind_mw", "pv_mw", "load_mw"];

/// Accepts RFC 3339 (converted to UTC) or a naive ISO 8601 date-time with a
/// `T` or space separator and optional fractional seconds.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// Reads dispatch records from CSV with a header row. Gaps between
/// timestamps are kept as they are.
pub fn ingest_dispatch<R: Read>(source: R) -> Result<Vec<DispatchRecord>, AnalyticsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| AnalyticsError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(missing) = REQUIRED_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(AnalyticsError::MissingColumn(missing.to_string()));
    }

    let mut records: Vec<DispatchRecord> = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        let more = reader.read_record(&mut row).map_err(|e| AnalyticsError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = row.position().map_or(line, |p| p.line());
        let malformed = |reason: String| AnalyticsError::MalformedRow { line, reason };
        let raw: RawRecord = row.deserialize(Some(&headers)).map_err(|e| malformed(e.to_string()))?;
        let timestamp =
            parse_timestamp(&raw.timestamp).ok_or_else(|| malformed(format!("bad timestamp `{}`", raw.timestamp)))?;

        let powers = [
            ("conventional_mw", Some(raw.conventional_mw)),
            ("wind_mw", Some(raw.wind_mw)),
            ("pv_mw", Some(raw.pv_mw)),
            ("other_res_mw", raw.other_res_mw),
            ("load_mw", Some(raw.load_mw)),
        ];
        for (column, value) in powers {
            let Some(v) = value else { continue };
            if !v.is_finite() {
                return Err(malformed(format!("`{column}` is not finite")));
            }
            if v < 0.0 {
                return Err(AnalyticsError::NegativePower { line, column });
            }
        }
        if let Some(prev) = records.last() {
            if timestamp <= prev.timestamp {
                return Err(AnalyticsError::NonMonotoneTimestamps {
                    line,
                    previous: prev.timestamp,
                    current: timestamp,
                });
            }
        }
        records.push(DispatchRecord {
            timestamp,
            conventional_mw: raw.conventional_mw,
            wind_mw: raw.wind_mw,
            pv_mw: raw.pv_mw,
            other_res_mw: raw.other_res_mw,
            load_mw: raw.load_mw,
        });
    }
    Ok(records)
}

/// Values sampled at strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub time: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
}

/// Interval assumed for a single-sample series, hours.
const SINGLE_SAMPLE_HOURS: f64 = 1.0;

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time each sample stands for, hours: the spacing to the next sample,
    /// and for the last sample the most common spacing (the shortest on
    /// ties).
    pub fn interval_hours(&self) -> Vec<f64> {
        let ms: Vec<i64> = self
            .time
            .windows(2)
            .map(|w| (w[1] - w[0]).num_milliseconds())
            .collect();
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &d in &ms {
            *counts.entry(d).or_default() += 1;
        }
        let modal = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map_or(SINGLE_SAMPLE_HOURS, |(&d, _)| d as f64 / 3.6e6);
        let mut hours: Vec<f64> = ms.iter().map(|&d| d as f64 / 3.6e6).collect();
        if !self.is_empty() {
            hours.push(modal);
        }
        hours
    }

    /// Total represented time, hours.
    pub fn span_hours(&self) -> f64 {
        self.interval_hours().iter().sum()
    }

    /// CSV with columns `timestamp,<name>`.
    pub fn write_csv<W: Write>(&self, name: &str, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", name])?;
        for (t, v) in self.time.iter().zip(&self.values) {
            w.write_record([t.format("%Y-%m-%dT%H:%M:%S").to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wind plus PV as a share of load, %.
pub fn res_share_series(records: &[DispatchRecord]) -> Result<Series, AnalyticsError> {
    let values = records
        .iter()
        .map(|r| {
            if r.load_mw > 0.0 {
                Ok(r.inverter_mw() / r.load_mw * 100.0)
            } else {
                Err(AnalyticsError::ZeroLoad(r.timestamp))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Series {
        time: records.iter().map(|r| r.timestamp).collect(),
        values,
    })
}

/// Generation-weighted aggregated inertia, s.
pub fn inertia_series(records: &[DispatchRecord], assumptions: InertiaAssumptions) -> Result<Series, AnalyticsError> {
    assumptions.validate()?;
    let values = records
        .iter()
        .map(|r| {
            let entries: Vec<(f64, f64)> = [
                (assumptions.h_conv, r.conventional_mw),
                (assumptions.h_res, r.inverter_mw()),
            ]
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .collect();
            aggregate_inertia(&entries)
                .map(|(h, _)| h)
                .map_err(|_| AnalyticsError::ZeroGeneration(r.timestamp))
        })
        .collect::<Result<_, _>>()?;
    Ok(Series {
        time: records.iter().map(|r| r.timestamp).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Count samples with `value < threshold`.
    Below,
    /// Count samples with `value ≥ threshold`.
    AtOrAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Duration {
    pub hours: f64,
    /// Share of the series span, %.
    pub percent: f64,
}

/// Interval-weighted time the series spends on the requested side of
/// `threshold`.
pub fn duration_below(series: &Series, threshold: f64, direction: Direction) -> Result<Duration, AnalyticsError> {
    if series.is_empty() {
        return Err(AnalyticsError::EmptySeries);
    }
    let weights = series.interval_hours();
    let span: f64 = weights.iter().sum();
    let hours: f64 = series
        .values
        .iter()
        .zip(&weights)
        .filter(|(&v, _)| match direction {
            Direction::Below => v < threshold,
            Direction::AtOrAbove => v >= threshold,
        })
        .map(|(_, w)| w)
        .sum();
    Ok(Duration {
        hours,
        percent: hours / span * 100.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub edges: Vec<f64>,
    /// Time per bin, hours.
    pub hours: Vec<f64>,
    /// Share of the span per bin, %.
    pub percent: Vec<f64>,
    pub span_hours: f64,
}

/// Samples per partial histogram before the ordered merge.
const HISTOGRAM_CHUNK: usize = 4096;

/// Bin `k` covers `[edges[k], edges[k+1])`, the last bin is closed. Values
/// outside the edges are counted in the nearest outer bin so the bins always
/// add up to the span.
pub fn histogram(series: &Series, edges: &[f64], exec: Execution) -> Result<HistogramReport, AnalyticsError> {
    if series.is_empty() {
        return Err(AnalyticsError::EmptySeries);
    }
    if edges.len() < 2 {
        return Err(AnalyticsError::BadEdges(format!("need at least 2 edges, got {}", edges.len())));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalyticsError::BadEdges(format!("{edges:?} is not strictly increasing")));
    }
    let bins = edges.len() - 1;
    let bin_of = |v: f64| edges[1..bins].partition_point(|&e| e <= v);

    let weighted: Vec<(f64, f64)> = series.values.iter().copied().zip(series.interval_hours()).collect();
    let partials = par::map_chunks(&weighted, HISTOGRAM_CHUNK, exec, |chunk| {
        let mut h = vec![0.0; bins];
        for &(v, w) in chunk {
            h[bin_of(v)] += w;
        }
        h
    });
    let mut hours = vec![0.0; bins];
    for p in &partials {
        for (acc, x) in hours.iter_mut().zip(p) {
            *acc += x;
        }
    }
    let span_hours: f64 = weighted.iter().map(|&(_, w)| w).sum();
    Ok(HistogramReport {
        edges: edges.to_vec(),
        percent: hours.iter().map(|h| h / span_hours * 100.0).collect(),
        hours,
        span_hours,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FIXTURE: &str = "\
timestamp,conventional_mw,wind_mw,pv_mw,load_mw
2016-01-01T00:00:00,40000,10000,0,50000
2016-01-01T01:00:00,25000,20000,5000,50000
2016-01-01T02:00:00,50000,0,0,52000
";

    fn hourly(values: &[f64]) -> Series {
        let t0 = parse_timestamp("2016-01-01T00:00:00").unwrap();
        Series {
            time: (0..values.len()).map(|k| t0 + chrono::Duration::hours(k as i64)).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn ingest_fixture() {
        let r = ingest_dispatch(FIXTURE.as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[1].wind_mw, 20000.0);
        assert_eq!(r[2].other_res_mw, None);
    }

    #[test]
    fn timestamp_formats() {
        let a = parse_timestamp("2016-01-01T01:00:00+01:00").unwrap();
        let b = parse_timestamp("2016-01-01 00:00:00").unwrap();
        let c = parse_timestamp("2016-01-01T00:00").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn negative_power_reports_line() {
        let bad = FIXTURE.replace("20000,5000", "-20000,5000");
        assert_eq!(
            ingest_dispatch(bad.as_bytes()),
            Err(AnalyticsError::NegativePower {
                line: 3,
                column: "wind_mw"
            })
        );
    }

    #[test]
    fn row_errors() {
        let swapped = FIXTURE.replace("T01:00", "T03:00");
        assert!(matches!(
            ingest_dispatch(swapped.as_bytes()),
            Err(AnalyticsError::NonMonotoneTimestamps { line: 4, .. })
        ));
        let garbled = FIXTURE.replace("52000", "lots");
        assert!(matches!(
            ingest_dispatch(garbled.as_bytes()),
            Err(AnalyticsError::MalformedRow { line: 4, .. })
        ));
        let short = "timestamp,wind_mw\n";
        assert_eq!(
            ingest_dispatch(short.as_bytes()),
            Err(AnalyticsError::MissingColumn("conventional_mw".into()))
        );
        assert_eq!(ingest_dispatch("".as_bytes()), Ok(vec![]));
    }

    #[test]
    fn shares_and_inertia() {
        let r = ingest_dispatch(FIXTURE.as_bytes()).unwrap();
        let share = res_share_series(&r).unwrap();
        assert_eq!(share.values, vec![20.0, 50.0, 0.0]);
        let h = inertia_series(&r, InertiaAssumptions::default()).unwrap();
        assert_relative_eq!(h.values[0], 4.8, max_relative = 1e-12);
        assert_relative_eq!(h.values[1], 3.0, max_relative = 1e-12);
        assert_eq!(h.values[2], 6.0);
    }

    #[test]
    fn zero_load_and_generation() {
        let mut r = ingest_dispatch(FIXTURE.as_bytes()).unwrap();
        r[0].load_mw = 0.0;
        assert!(matches!(res_share_series(&r), Err(AnalyticsError::ZeroLoad(_))));
        r[0].conventional_mw = 0.0;
        r[0].wind_mw = 0.0;
        assert!(matches!(
            inertia_series(&r, InertiaAssumptions::default()),
            Err(AnalyticsError::ZeroGeneration(_))
        ));
    }

    #[test]
    fn intervals_use_modal_spacing_for_the_last_sample() {
        let mut s = hourly(&[1.0, 2.0, 3.0, 4.0]);
        s.time[3] = s.time[2] + chrono::Duration::minutes(30);
        assert_eq!(s.interval_hours(), vec![1.0, 1.0, 0.5, 1.0]);
        assert_eq!(hourly(&[1.0]).interval_hours(), vec![1.0]);
    }

    #[test]
    fn durations() {
        let s = hourly(&[6.0; 24]);
        assert_eq!(duration_below(&s, 4.0, Direction::Below).unwrap().hours, 0.0);
        let all = duration_below(&s, f64::INFINITY, Direction::Below).unwrap();
        assert_eq!((all.hours, all.percent), (24.0, 100.0));
        assert_eq!(
            duration_below(&hourly(&[]), 4.0, Direction::Below),
            Err(AnalyticsError::EmptySeries)
        );
    }

    #[test]
    fn histogram_bins_and_clamping() {
        let s = hourly(&[-1.0, 0.5, 1.0, 2.0, 2.5, 9.0]);
        let h = histogram(&s, &[0.0, 1.0, 2.0, 3.0], Execution::Sequential).unwrap();
        assert_eq!(h.hours, vec![2.0, 1.0, 3.0]);
        assert_eq!(h.span_hours, 6.0);
        assert_relative_eq!(h.percent.iter().sum::<f64>(), 100.0, max_relative = 1e-12);
        assert!(matches!(
            histogram(&s, &[1.0, 1.0], Execution::Sequential),
            Err(AnalyticsError::BadEdges(_))
        ));
        assert!(matches!(histogram(&s, &[1.0], Execution::Sequential), Err(AnalyticsError::BadEdges(_))));
        assert_eq!(
            histogram(&hourly(&[]), &[0.0, 1.0], Execution::Sequential),
            Err(AnalyticsError::EmptySeries)
        );
    }
}
