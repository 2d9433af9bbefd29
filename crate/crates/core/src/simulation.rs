//! Alternatives with an elevated interval and the power study.
//!
//! On the PIT scale the alternative has density
//! `(r 1(y in I) + 1(y not in I)) / (r |I| + 1 - |I|)` on `[0, 1]`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationOptions, CriticalValueTable, TableCache};
use crate::error::{Error, Result};
use crate::grids::GridKind;
use crate::rng::replicate_rng;
use crate::statistics::{Evaluator, StatKind};
use crate::transform::SortedSample;

/// Namespace of the stream used by [`sample_alternative`]; power studies use
/// `ALT_NAMESPACE + r_index`.
pub const ALT_NAMESPACE: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalStart {
    Fixed(f64),
    /// Uniform on `[0, 1 - len]`, redrawn for every sample.
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternativeSpec {
    pub r: f64,
    pub interval_len: f64,
    pub start: IntervalStart,
    pub n: usize,
}

impl AlternativeSpec {
    pub fn new(r: f64, interval_len: f64, start: IntervalStart, n: usize) -> Result<Self> {
        let spec = Self {
            r,
            interval_len,
            start,
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        effect_mass(self.r, self.interval_len)?;
        if let IntervalStart::Fixed(s) = self.start {
            if !(0.0..=1.0 - self.interval_len).contains(&s) {
                return Err(Error::domain(format!(
                    "interval start {s} must lie in [0, {}]",
                    1.0 - self.interval_len
                )));
            }
        }
        if self.n == 0 {
            return Err(Error::domain("sample size n must be positive"));
        }
        Ok(())
    }
}

fn check_r_len(r: f64, len: f64) -> Result<()> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::domain(format!("r = {r} must be finite and at least 1")));
    }
    if !(len > 0.0 && len < 1.0) {
        return Err(Error::domain(format!("interval length {len} must lie in (0, 1)")));
    }
    Ok(())
}

/// `F_{r,I}(I) = r len / (r len + 1 - len)`.
pub fn effect_mass(r: f64, len: f64) -> Result<f64> {
    check_r_len(r, len)?;
    Ok(r * len / (r * len + 1.0 - len))
}

/// `sqrt(n) (F - len) / sqrt(F) - sqrt(2 ln(e / F))` with `F = effect_mass(r, len)`.
/// Positive values put the alternative beyond the detection boundary.
pub fn detectability_margin(n: usize, r: f64, len: f64) -> Result<f64> {
    let f = effect_mass(r, len)?;
    let signal = (n as f64).sqrt() * (f - len) / f.sqrt();
    Ok(signal - (2.0 * (1.0 - f.ln())).sqrt())
}

/// A draw from the alternative together with the interval it was drawn
/// for.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeDraw {
    pub sample: SortedSample,
    pub interval: (f64, f64),
}

/// Mixture sampler: each point is uniform on `I` with probability
/// `effect_mass`, otherwise uniform on the complement.
pub fn sample_alternative_from<R: Rng + ?Sized>(
    spec: &AlternativeSpec,
    rng: &mut R,
) -> Result<AlternativeDraw> {
    spec.validate()?;
    let len = spec.interval_len;
    let start = match spec.start {
        IntervalStart::Fixed(s) => s,
        IntervalStart::Randomized => rng.random::<f64>() * (1.0 - len),
    };
    let p = effect_mass(spec.r, len)?;
    let mut u: Vec<f64> = (0..spec.n)
        .map(|_| {
            if rng.random::<f64>() < p {
                start + len * rng.random::<f64>()
            } else {
                let v = (1.0 - len) * rng.random::<f64>();
                if v >= start {
                    v + len
                } else {
                    v
                }
            }
        })
        .map(|v: f64| v.min(1.0))
        .collect();
    u.sort_by(f64::total_cmp);
    Ok(AlternativeDraw {
        sample: SortedSample::from_sorted_unchecked(u),
        interval: (start, start + len),
    })
}

pub fn sample_alternative(spec: &AlternativeSpec, seed: u64) -> Result<SortedSample> {
    let mut rng = replicate_rng(seed, ALT_NAMESPACE, 0);
    Ok(sample_alternative_from(spec, &mut rng)?.sample)
}

fn default_alpha() -> f64 {
    0.05
}

fn default_reps() -> usize {
    500
}

fn default_calibration_b() -> usize {
    crate::calibration::DEFAULT_REPLICATES
}

fn default_start() -> IntervalStart {
    IntervalStart::Randomized
}

/// One power-study block: a sample size, interval length and list of
/// intensity ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub n: usize,
    pub len: f64,
    pub r: Vec<f64>,
    pub statistics: Vec<StatKind>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    /// Replicates behind each critical value.
    #[serde(rename = "B", default = "default_calibration_b")]
    pub calibration_b: usize,
    pub calibration_seed: u64,
    #[serde(default = "default_start")]
    pub start: IntervalStart,
    /// Evaluate the scan over the scan grid instead of all pairs.
    #[serde(default)]
    pub scan_on_grid: bool,
}

/// A config file: one or more `[[study]]` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPlan {
    pub study: Vec<PowerConfig>,
}

impl PowerPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: PowerPlan =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for block in &plan.study {
            block.validate()?;
        }
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r.is_empty() || self.statistics.is_empty() {
            return Err(Error::Config("r and statistics must be nonempty".into()));
        }
        if self.reps == 0 || self.calibration_b == 0 {
            return Err(Error::Config("reps and B must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        for &r in &self.r {
            AlternativeSpec::new(r, self.len, self.start, self.n)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Evaluators for the configured statistics, in config order.
    pub fn evaluators(&self) -> Result<Vec<Evaluator>> {
        self.statistics
            .iter()
            .map(|&kind| {
                let grid = (self.scan_on_grid && kind == StatKind::ScanRestricted)
                    .then_some(GridKind::ScanDataDependent);
                Evaluator::with_grid_kind(kind, self.n, grid)
            })
            .collect()
    }
}

/// Where power studies get their critical values.
#[derive(Debug, Clone)]
pub enum TableSource {
    /// Precomputed tables; a statistic without a compatible table is an
    /// error.
    Tables(Vec<CriticalValueTable>),
    /// Look up or calibrate through an on-disk cache.
    Cache(TableCache),
    /// Calibrate in memory, nothing persisted.
    Calibrate,
}

impl TableSource {
    fn critical_value(
        &self,
        evaluator: &Evaluator,
        config: &PowerConfig,
    ) -> Result<f64> {
        let alphas = [config.alpha];
        let options = CalibrationOptions::default();
        match self {
            TableSource::Tables(tables) => tables
                .iter()
                .find(|t| t.check_compatible(evaluator).is_ok())
                .ok_or_else(|| {
                    Error::MissingTable(format!(
                        "no table for {} at n = {}",
                        evaluator.kind(),
                        evaluator.n()
                    ))
                })?
                .critical_value(config.alpha),
            TableSource::Cache(cache) => cache
                .get_or_calibrate(
                    evaluator,
                    config.calibration_b,
                    config.calibration_seed,
                    &alphas,
                    options,
                )?
                .critical_value(config.alpha),
            TableSource::Calibrate => calibrate(
                evaluator,
                config.calibration_b,
                config.calibration_seed,
                &alphas,
                options,
            )?
            .critical_value(config.alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n: usize,
    pub len: f64,
    pub r: f64,
    pub statistic: StatKind,
    pub alpha: f64,
    pub reps: usize,
    pub power: f64,
    pub se: f64,
    pub seed: u64,
}

/// Power of every configured statistic at every `r`.
///
/// Replicate `b` at the `i`-th ratio draws from stream
/// `(seed, ALT_NAMESPACE + i, b)`; all statistics see the same sample.
/// A replicate rejects when the statistic exceeds its critical value.
pub fn power_study(config: &PowerConfig, source: &TableSource) -> Result<Vec<PowerRow>> {
    config.validate()?;
    let evaluators = config.evaluators()?;
    let critical = evaluators
        .iter()
        .map(|ev| source.critical_value(ev, config))
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::with_capacity(config.r.len() * evaluators.len());
    for (ri, &r) in config.r.iter().enumerate() {
        let spec = AlternativeSpec::new(r, config.len, config.start, config.n)?;
        let namespace = ALT_NAMESPACE + ri as u64;
        let rejections = (0..config.reps as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = replicate_rng(config.seed, namespace, b);
                let draw = sample_alternative_from(&spec, &mut rng)?;
                evaluators
                    .iter()
                    .zip(&critical)
                    .map(|(ev, &c)| Ok(ev.evaluate(&draw.sample)?.value > c))
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<Vec<bool>>>>()?;
        for (si, ev) in evaluators.iter().enumerate() {
            let hits = rejections.iter().filter(|rep| rep[si]).count();
            let power = hits as f64 / config.reps as f64;
            rows.push(PowerRow {
                n: config.n,
                len: config.len,
                r,
                statistic: ev.kind(),
                alpha: config.alpha,
                reps: config.reps,
                power,
                se: (power * (1.0 - power) / config.reps as f64).sqrt(),
                seed: config.seed,
            });
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header line.
pub fn write_power_csv<W: Write>(rows: &[PowerRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)
            .map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
    }
    out.flush()
        .map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
    Ok(())
}
