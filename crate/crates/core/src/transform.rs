//! Data ingestion and the probability integral transform.
//!
//! Every statistic in this crate works on the uniform scale: observations are
//! mapped through the known null CDF `F0`, sorted, and from then on only the
//! order statistics `u_(1) <= ... <= u_(n)` matter.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Values within this distance of 0 or 1 are clamped onto the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Observations on the original scale, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    values: Vec<f64>,
}

impl RawSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "observation {} is not finite ({})",
                i + 1,
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The observations sorted ascending (original-scale order statistics).
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Order statistics on the PIT scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    u: Vec<f64>,
}

impl SortedSample {
    /// Wraps values that are already sorted and lie in `[0, 1]`.
    pub fn from_sorted(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::EmptySample);
        }
        for (i, &x) in u.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::CdfOutOfRange { index: i, value: x });
            }
        }
        if u.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain("values are not sorted ascending"));
        }
        Ok(Self { u })
    }

    /// Sorts values in `[0, 1]` (e.g. raw uniform draws).
    pub fn from_unsorted(mut u: Vec<f64>) -> Result<Self> {
        u.sort_by(f64::total_cmp);
        Self::from_sorted(u)
    }

    pub(crate) fn from_sorted_unchecked(u: Vec<f64>) -> Self {
        debug_assert!(u.windows(2).all(|w| w[0] <= w[1]));
        Self { u }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    /// 1-based order statistic `u_(i)`.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.u[i - 1]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.u
    }
}

/// Known null distribution function `F0`.
#[derive(Debug, Clone, PartialEq)]
pub enum NullCdf {
    /// Uniform on `[0, 1]`.
    Uniform,
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
    /// Piecewise-linear interpolation between knots, constant outside.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

impl NullCdf {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("exponential rate must be > 0, got {rate}")));
        }
        Ok(NullCdf::Exponential { rate })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd.is_finite() && sd > 0.0) {
            return Err(Error::domain(format!(
                "normal parameters must be finite with sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(NullCdf::Normal { mean, sd })
    }

    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::domain("CDF table needs matching, nonempty knot and value lists"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::domain("CDF table contains non-finite entries"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("CDF table knots must be strictly increasing"));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain("CDF table values must be nondecreasing"));
        }
        Ok(NullCdf::Table { knots, values })
    }

    /// Parses `uniform`, `exp:<rate>`, `normal:<mu>,<sigma>` or `table:<path>`.
    /// Table files hold `x,F0(x)` rows, with an optional header row.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(path) = spec.strip_prefix("table:") {
            return Self::load_table(Path::new(path));
        }
        spec.parse()
    }

    fn load_table(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(e, idx + 1))?;
            let line = record.position().map_or(idx + 1, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields (x, F0(x)), found {}", record.len()),
                });
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(f)) => {
                    knots.push(x);
                    values.push(f);
                }
                // header row
                _ if idx == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-numeric CDF table row {:?}", record.as_slice()),
                    })
                }
            }
        }
        if knots.is_empty() {
            return Err(Error::EmptySample);
        }
        Self::table(knots, values)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            NullCdf::Uniform => x.clamp(0.0, 1.0),
            NullCdf::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            NullCdf::Normal { mean, sd } => normal(*mean, *sd).cdf(x),
            NullCdf::Table { knots, values } => interpolate(knots, values, x),
        }
    }

    /// Generalized inverse `inf { x : F0(x) >= p }`, used to map PIT-scale
    /// endpoints back onto the data scale.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            NullCdf::Uniform => p,
            NullCdf::Exponential { rate } => -(-p).ln_1p() / rate,
            NullCdf::Normal { mean, sd } => normal(*mean, *sd).inverse_cdf(p),
            NullCdf::Table { knots, values } => {
                let i = values.partition_point(|&v| v < p);
                if i == 0 {
                    knots[0]
                } else if i == values.len() {
                    knots[knots.len() - 1]
                } else {
                    let (v0, v1) = (values[i - 1], values[i]);
                    let t = (p - v0) / (v1 - v0);
                    knots[i - 1] + t * (knots[i] - knots[i - 1])
                }
            }
        }
    }
}

fn normal(mean: f64, sd: f64) -> Normal {
    Normal::new(mean, sd).expect("normal parameters validated at construction")
}

fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let i = knots.partition_point(|&k| k <= x);
    if i == 0 {
        values[0]
    } else if i == knots.len() {
        values[values.len() - 1]
    } else {
        let t = (x - knots[i - 1]) / (knots[i] - knots[i - 1]);
        values[i - 1] + t * (values[i] - values[i - 1])
    }
}

impl FromStr for NullCdf {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |what: &str| Error::domain(format!("invalid null CDF spec {s:?}: {what}"));
        if s == "uniform" {
            return Ok(NullCdf::Uniform);
        }
        if let Some(rate) = s.strip_prefix("exp:") {
            let rate = rate.trim().parse::<f64>().map_err(|_| bad("rate is not a number"))?;
            return Self::exponential(rate);
        }
        if let Some(params) = s.strip_prefix("normal:") {
            let (mu, sigma) = params
                .split_once(',')
                .ok_or_else(|| bad("expected normal:<mu>,<sigma>"))?;
            let mu = mu.trim().parse::<f64>().map_err(|_| bad("mu is not a number"))?;
            let sigma = sigma.trim().parse::<f64>().map_err(|_| bad("sigma is not a number"))?;
            return Self::normal(mu, sigma);
        }
        if s.starts_with("table:") {
            return Self::from_spec(s);
        }
        Err(bad("expected uniform, exp:<rate>, normal:<mu>,<sigma> or table:<path>"))
    }
}

impl fmt::Display for NullCdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NullCdf::Uniform => write!(f, "uniform"),
            NullCdf::Exponential { rate } => write!(f, "exp:{rate}"),
            NullCdf::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            NullCdf::Table { knots, .. } => write!(f, "table[{} knots]", knots.len()),
        }
    }
}

/// Maps observations through `F0` and sorts them.
///
/// Values within [`BOUNDARY_TOLERANCE`] of the unit interval are clamped;
/// anything further out is an error. Ties are kept.
pub fn pit_transform(raw: &RawSample, f0: &NullCdf) -> Result<SortedSample> {
    if raw.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut u = Vec::with_capacity(raw.len());
    for (index, &x) in raw.values().iter().enumerate() {
        let value = f0.cdf(x);
        if !(-BOUNDARY_TOLERANCE..=1.0 + BOUNDARY_TOLERANCE).contains(&value) {
            return Err(Error::CdfOutOfRange { index, value });
        }
        u.push(value.clamp(0.0, 1.0));
    }
    u.sort_by(f64::total_cmp);
    Ok(SortedSample::from_sorted_unchecked(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Jsonl,
}

impl SampleFormat {
    /// `.jsonl`/`.ndjson` are JSON lines, everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => SampleFormat::Jsonl,
            _ => SampleFormat::Csv,
        }
    }
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(SampleFormat::Csv),
            "jsonl" | "ndjson" => Ok(SampleFormat::Jsonl),
            other => Err(Error::domain(format!("unknown sample format {other:?}"))),
        }
    }
}

/// Reads one numeric value per record.
pub fn load_sample(path: &Path, format: SampleFormat) -> Result<RawSample> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let values = match format {
        SampleFormat::Csv => read_csv(file)?,
        SampleFormat::Jsonl => read_jsonl(BufReader::new(file), path)?,
    };
    RawSample::new(values)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn read_csv(file: File) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, idx + 1))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.len() != 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected one value per line, found {} fields", record.len()),
            });
        }
        let field = &record[0];
        if idx == 0 && field.eq_ignore_ascii_case("value") {
            continue;
        }
        values.push(parse_value(field, line)?);
    }
    Ok(values)
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: f64 = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        values.push(check_finite(value, idx + 1)?);
    }
    Ok(values)
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let value = field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{field:?} is not a number"),
    })?;
    check_finite(value, line)
}

fn check_finite(value: f64, line: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Parse {
            line,
            message: format!("{value} is not finite"),
        })
    }
}
