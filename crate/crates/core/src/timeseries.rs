//! Time-series containers, NAB-style CSV ingestion, calendar features,
//! rolling windows, and the repeated ordered train/validation split.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::util::{component_rng, stream};

/// Timestamp layout used by all text files: `YYYY-MM-DD HH:MM:SS`, UTC.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePoint {
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

/// Strictly time-ordered univariate series with optional binary labels
/// (1 = anomaly), one label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    points: Vec<TimePoint>,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(points: Vec<TimePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.value.is_finite() {
                return Err(Error::invalid(
                    "value",
                    format!("non-finite at position {i}"),
                ));
            }
            if i > 0 && p.timestamp <= points[i - 1].timestamp {
                return Err(Error::NonMonotonicTimestamps { position: i });
            }
        }
        Ok(TimeSeries {
            points,
            labels: None,
        })
    }

    pub fn with_labels(points: Vec<TimePoint>, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::LengthMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid("labels", format!("label {bad} is not 0/1")));
        }
        let mut s = TimeSeries::new(points)?;
        s.labels = Some(labels);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TimePoint] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn timestamps(&self) -> Vec<NaiveDateTime> {
        self.points.iter().map(|p| p.timestamp).collect()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Contiguous sub-series; labels, when present, travel with the points.
    pub fn slice(&self, range: Range<usize>) -> TimeSeries {
        TimeSeries {
            points: self.points[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }
}

/// Calendar position of a timestamp. `day_of_week` counts from Monday = 0,
/// so `is_weekend` corresponds to days 5 and 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarFeatures {
    pub hour_of_day: u8,
    pub day_of_week: u8,
    pub month_of_year: u8,
    pub is_weekend: bool,
}

pub fn extract_calendar(t: NaiveDateTime) -> CalendarFeatures {
    let day_of_week = t.weekday().num_days_from_monday() as u8;
    CalendarFeatures {
        hour_of_day: t.hour() as u8,
        day_of_week,
        month_of_year: t.month() as u8,
        is_weekend: day_of_week >= 5,
    }
}

/// One supervised sample: the `W` values preceding `index` as features and
/// the value at `index` as target.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    pub features: Vec<f64>,
    pub target: f64,
    pub timestamp: NaiveDateTime,
    pub index: usize,
}

/// Rolling windows over the series: one sample per index in `W..N`, so the
/// output has exactly `N - W` samples.
pub fn make_windows(series: &TimeSeries, window: usize) -> Result<Vec<WindowedSample>> {
    if window == 0 {
        return Err(Error::invalid("window", "must be positive"));
    }
    let n = series.len();
    if n <= window {
        return Err(Error::TooFewPoints {
            context: "make_windows",
            needed: window + 1,
            got: n,
        });
    }
    let points = series.points();
    Ok((window..n)
        .map(|i| WindowedSample {
            features: points[i - window..i].iter().map(|p| p.value).collect(),
            target: points[i].value,
            timestamp: points[i].timestamp,
            index: i,
        })
        .collect())
}

/// Repeated contiguous train/validation split. The boundary starts at
/// `floor(train_fraction * N)`; each repeat jitters it by a seeded offset
/// within plus or minus 5% of N, drawn without replacement so repeats get
/// distinct boundaries whenever the offset pool allows. `jitter = false`
/// pins every repeat to the base boundary for fixed-split comparisons.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub repeat_count: usize,
    pub seed: u64,
    pub jitter: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, repeat_count: usize, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_fraction,
            repeat_count,
            seed,
            jitter: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fixed(mut self) -> Self {
        self.jitter = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(
                "train_fraction",
                format!("{} is outside (0, 1)", self.train_fraction),
            ));
        }
        if self.repeat_count == 0 {
            return Err(Error::invalid("repeat_count", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn ordered_split(
    series: &TimeSeries,
    spec: &SplitSpec,
) -> Result<Vec<(TimeSeries, TimeSeries)>> {
    spec.validate()?;
    let n = series.len();
    if n < 10 {
        return Err(Error::TooFewPoints {
            context: "ordered_split",
            needed: 10,
            got: n,
        });
    }
    let base = (spec.train_fraction * n as f64).floor() as usize;
    if n.saturating_sub(base) < 2 {
        return Err(Error::ValidationTooSmall {
            got: n.saturating_sub(base),
        });
    }
    if base < 2 {
        return Err(Error::TooFewPoints {
            context: "ordered_split train side",
            needed: 2,
            got: base,
        });
    }

    let max_offset = (0.05 * n as f64).floor() as i64;
    let mut offsets: Vec<i64> = (-max_offset..=max_offset).collect();
    let mut rng = component_rng(spec.seed, stream::SPLIT_JITTER, 0, 0);
    offsets.shuffle(&mut rng);

    Ok((0..spec.repeat_count)
        .map(|r| {
            let off = if spec.jitter {
                offsets[r % offsets.len()]
            } else {
                0
            };
            let boundary = (base as i64 + off).clamp(2, n as i64 - 2) as usize;
            (series.slice(0..boundary), series.slice(boundary..n))
        })
        .collect())
}

/// Reads a `timestamp,value` CSV (header required, values must all be
/// present and finite, timestamps strictly increasing). Row numbers in
/// errors are 1-based and count the header.
pub fn load_nab_csv(path: &Path) -> Result<TimeSeries> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    let mut prev: Option<NaiveDateTime> = None;
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: display.clone(),
            source,
        })?;
        let line = line.trim_end();
        if row == 1 {
            if line != "timestamp,value" {
                return Err(Error::Csv {
                    path: display,
                    row,
                    msg: format!("expected header 'timestamp,value', got '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (ts_str, val_str) = line.split_once(',').ok_or_else(|| Error::Csv {
            path: display.clone(),
            row,
            msg: "expected two comma-separated fields".into(),
        })?;
        let timestamp = parse_timestamp(ts_str).map_err(|e| Error::Csv {
            path: display.clone(),
            row,
            msg: format!("bad timestamp '{ts_str}': {e}"),
        })?;
        let value: f64 = val_str.trim().parse().map_err(|_| Error::Csv {
            path: display.clone(),
            row,
            msg: format!("bad value '{val_str}'"),
        })?;
        if !value.is_finite() {
            return Err(Error::Csv {
                path: display,
                row,
                msg: format!("non-finite value '{val_str}'"),
            });
        }
        if let Some(p) = prev {
            if timestamp <= p {
                return Err(Error::NonMonotonicTimestamps {
                    position: points.len(),
                });
            }
        }
        prev = Some(timestamp);
        points.push(TimePoint { timestamp, value });
    }
    if points.is_empty() {
        return Err(Error::EmptySeries { path: display });
    }
    TimeSeries::new(points)
}

/// Writes the series back in the same CSV layout. Values use the shortest
/// representation that parses back to the identical bits.
pub fn write_nab_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| Error::Io {
        path: display.clone(),
        source,
    };
    writeln!(w, "timestamp,value").map_err(io_err)?;
    for p in series.points() {
        writeln!(w, "{},{}", format_timestamp(p.timestamp), p.value).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: display,
        source,
    })
}

/// Reads anomaly windows: one `start_timestamp,end_timestamp` pair per row,
/// no header. Both endpoints are inclusive.
pub fn load_label_windows(path: &Path) -> Result<Vec<(NaiveDateTime, NaiveDateTime)>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut windows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: display.clone(),
            source,
        })?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (start_str, end_str) = line.split_once(',').ok_or_else(|| Error::Csv {
            path: display.clone(),
            row,
            msg: "expected 'start_timestamp,end_timestamp'".into(),
        })?;
        let start = parse_timestamp(start_str).map_err(|e| Error::Csv {
            path: display.clone(),
            row,
            msg: format!("bad start timestamp '{start_str}': {e}"),
        })?;
        let end = parse_timestamp(end_str).map_err(|e| Error::Csv {
            path: display.clone(),
            row,
            msg: format!("bad end timestamp '{end_str}': {e}"),
        })?;
        if end < start {
            return Err(Error::Csv {
                path: display,
                row,
                msg: "window end precedes start".into(),
            });
        }
        windows.push((start, end));
    }
    Ok(windows)
}

pub fn write_label_windows(windows: &[(NaiveDateTime, NaiveDateTime)], path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for (start, end) in windows {
        writeln!(w, "{},{}", format_timestamp(*start), format_timestamp(*end)).map_err(
            |source| Error::Io {
                path: display.clone(),
                source,
            },
        )?;
    }
    w.flush().map_err(|source| Error::Io {
        path: display,
        source,
    })
}

/// Labels each point 1 iff it falls inside any window (inclusive bounds).
pub fn apply_label_windows(
    series: &TimeSeries,
    windows: &[(NaiveDateTime, NaiveDateTime)],
) -> TimeSeries {
    let labels: Vec<u8> = series
        .points()
        .iter()
        .map(|p| {
            windows
                .iter()
                .any(|(s, e)| *s <= p.timestamp && p.timestamp <= *e) as u8
        })
        .collect();
    TimeSeries {
        points: series.points().to_vec(),
        labels: Some(labels),
    }
}
