//! Observations, validation and file ingestion.
//!
//! A [`TimeSeries`] is immutable after construction. Rows are kept sorted by
//! abscissa; the original file order is retained so diagnostics can point back
//! at the offending input line.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of observations accepted for analysis.
pub const MIN_OBSERVATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Observation {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Self { x, y, sigma }
    }

    fn validate(&self, row: usize) -> Result<()> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::InvalidObservation {
                row,
                msg: format!("non-finite value (x={}, y={})", self.x, self.y),
            });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidObservation {
                row,
                msg: format!("sigma must be positive and finite, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Doppler,
    TransitTiming,
    #[default]
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guess the format from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    observations: Vec<Observation>,
    kind: SeriesKind,
    /// `original_rows[i]` is the input row (1-based) of `observations[i]`.
    original_rows: Vec<usize>,
    duplicate_x: usize,
    /// Accumulated abscissa shift applied by [`TimeSeries::centered`].
    offset: f64,
}

impl TimeSeries {
    /// Validate and canonicalize (stable sort by `x`).
    pub fn new(observations: Vec<Observation>, kind: SeriesKind) -> Result<Self> {
        let rows = (1..=observations.len()).collect();
        Self::with_rows(observations, rows, kind)
    }

    fn with_rows(observations: Vec<Observation>, rows: Vec<usize>, kind: SeriesKind) -> Result<Self> {
        for (obs, &row) in observations.iter().zip(&rows) {
            obs.validate(row)?;
        }
        if observations.len() < MIN_OBSERVATIONS {
            return Err(Error::InvalidSeries(format!(
                "at least {MIN_OBSERVATIONS} observations required, got {}",
                observations.len()
            )));
        }
        let mut order: Vec<usize> = (0..observations.len()).collect();
        order.sort_by(|&a, &b| observations[a].x.total_cmp(&observations[b].x));
        let sorted: Vec<Observation> = order.iter().map(|&i| observations[i]).collect();
        let original_rows = order.iter().map(|&i| rows[i]).collect();
        let duplicate_x = sorted.windows(2).filter(|w| w[0].x == w[1].x).count();
        let ts = Self {
            observations: sorted,
            kind,
            original_rows,
            duplicate_x,
            offset: 0.0,
        };
        if ts.span() <= 0.0 {
            return Err(Error::InvalidSeries("span of x must be positive".into()));
        }
        Ok(ts)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn original_rows(&self) -> &[usize] {
        &self.original_rows
    }

    /// Number of adjacent equal-`x` pairs after sorting.
    pub fn duplicate_x(&self) -> usize {
        self.duplicate_x
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `max(x) - min(x)`.
    pub fn span(&self) -> f64 {
        match (self.observations.first(), self.observations.last()) {
            (Some(a), Some(b)) => b.x - a.x,
            _ => 0.0,
        }
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.x)
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.y)
    }

    /// Weighted average measurement precision `<1/sigma^2>^(-1/2)`.
    pub fn mean_precision(&self) -> f64 {
        let n = self.len() as f64;
        let inv: f64 = self.observations.iter().map(|o| 1.0 / (o.sigma * o.sigma)).sum();
        (inv / n).powf(-0.5)
    }

    /// Shift `x` by its mean. Returns the shifted series and the shift applied.
    pub fn centered(&self) -> (TimeSeries, f64) {
        let mean = self.xs().sum::<f64>() / self.len() as f64;
        let observations = self
            .observations
            .iter()
            .map(|o| Observation::new(o.x - mean, o.y, o.sigma))
            .collect();
        let ts = TimeSeries {
            observations,
            kind: self.kind,
            original_rows: self.original_rows.clone(),
            duplicate_x: self.duplicate_x,
            offset: self.offset + mean,
        };
        (ts, mean)
    }

    /// Serialize as `x,y,sigma` CSV with a header line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,y,sigma\n");
        for o in &self.observations {
            let _ = writeln!(out, "{},{},{}", o.x + self.offset, o.y, o.sigma);
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        let doc = JsonSeries {
            kind: self.kind,
            observations: self
                .observations
                .iter()
                .map(|o| [o.x + self.offset, o.y, o.sigma])
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("series serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonSeries {
    #[serde(default)]
    kind: SeriesKind,
    observations: Vec<[f64; 3]>,
}

/// Parse CSV text: optional header, `#` comment lines, columns `x,y,sigma`.
pub fn parse_csv(text: &str, kind: SeriesKind) -> Result<TimeSeries> {
    let mut observations = Vec::new();
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                observations.push(Observation::new(v[0], v[1], v[2]));
                rows.push(row);
            }
            // A non-numeric first data line is the header.
            Err(_) if observations.is_empty() && rows.is_empty() && is_header(&fields) => {}
            Err(e) => {
                return Err(Error::Parse {
                    row,
                    msg: format!("malformed number: {e}"),
                })
            }
        }
    }
    TimeSeries::with_rows(observations, rows, kind)
}

fn is_header(fields: &[&str]) -> bool {
    fields.iter().all(|f| f.parse::<f64>().is_err())
}

pub fn parse_json(text: &str) -> Result<TimeSeries> {
    let doc: JsonSeries = serde_json::from_str(text).map_err(|e| Error::Parse {
        row: e.line(),
        msg: e.to_string(),
    })?;
    let observations = doc
        .observations
        .into_iter()
        .map(|[x, y, s]| Observation::new(x, y, s))
        .collect();
    TimeSeries::new(observations, doc.kind)
}

/// Read and validate a series from disk.
pub fn load_timeseries(path: &Path, format: Format, kind: SeriesKind) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::Csv => parse_csv(&text, kind),
        Format::Json => parse_json(&text),
    }
}
