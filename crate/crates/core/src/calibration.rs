//! Monte Carlo null distributions, critical values, p-values and persisted
//! critical-value tables.
//!
//! All statistics are distribution free after the probability integral
//! transform, so their null law at a given `n` is simulated from i.i.d.
//! uniforms. Replicate `b` draws from its own counter-based stream keyed by
//! `(seed, b)`; the result does not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grids::{ApproxSet, GridKind};
use crate::rng::{replicate_rng, sorted_uniforms, NULL_NAMESPACE};
use crate::statistics::{Evaluator, StatKind};
use crate::transform::SortedSample;

pub const DEFAULT_ALPHAS: [f64; 3] = [0.10, 0.05, 0.01];
pub const DEFAULT_REPLICATES: usize = 10_000;
pub const SKETCH_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];
/// Quadratic statistics are refused above this size unless overridden.
pub const MAX_QUADRATIC_N: usize = 20_000;
pub const TABLE_VERSION: u64 = 1;

/// Sorted null replicates of one statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSample {
    pub kind: StatKind,
    pub n: usize,
    pub grid_hash: String,
    pub seed: u64,
    values: Vec<f64>,
}

impl NullSample {
    /// Wraps replicate values; sorts them.
    pub fn new(kind: StatKind, n: usize, grid_hash: String, seed: u64, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("a null sample needs at least one replicate"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            kind,
            n,
            grid_hash,
            seed,
            values,
        })
    }

    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CalibrationOptions {
    /// Permit quadratic statistics above [`MAX_QUADRATIC_N`].
    pub allow_large_quadratic: bool,
}

/// One null draw: `n` sorted uniforms from replicate stream `index`.
pub fn null_draw(n: usize, seed: u64, index: u64) -> SortedSample {
    let mut rng = replicate_rng(seed, NULL_NAMESPACE, index);
    SortedSample::from_sorted_unchecked(sorted_uniforms(&mut rng, n))
}

/// Simulates `replicates` null values of `kind` at sample size `n`.
pub fn simulate_null(kind: StatKind, n: usize, replicates: usize, seed: u64) -> Result<NullSample> {
    let evaluator = Evaluator::new(kind, n)?;
    simulate_null_with(&evaluator, replicates, seed, CalibrationOptions::default())
}

pub fn simulate_null_with(
    evaluator: &Evaluator,
    replicates: usize,
    seed: u64,
    options: CalibrationOptions,
) -> Result<NullSample> {
    if replicates == 0 {
        return Err(Error::domain("replicate count must be at least 1"));
    }
    let n = evaluator.n();
    let quadratic = evaluator.kind().is_quadratic() && evaluator.grid().is_none();
    if quadratic && n > MAX_QUADRATIC_N && !options.allow_large_quadratic {
        return Err(Error::UnsupportedStat(format!(
            "{} is quadratic in n; refusing n = {n} > {MAX_QUADRATIC_N} without an explicit override",
            evaluator.kind()
        )));
    }
    let values = (0..replicates as u64)
        .into_par_iter()
        .map(|b| evaluator.evaluate(&null_draw(n, seed, b)).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    NullSample::new(
        evaluator.kind(),
        n,
        evaluator.grid_hash().to_string(),
        seed,
        values,
    )
}

/// 1-based rank of the `(1 - alpha)` order statistic among `b` values.
fn upper_rank(alpha: f64, b: usize) -> usize {
    // the epsilon absorbs 1 - alpha being inexact in binary
    let r = ((1.0 - alpha) * b as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(b)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

fn order_statistic_at(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(values[upper_rank(alpha, values.len()) - 1])
}

/// The `ceil((1 - alpha) B)`-th order statistic of the null values.
pub fn critical_value(null: &NullSample, alpha: f64) -> Result<f64> {
    order_statistic_at(null.values(), alpha)
}

fn mc_p_value(observed: f64, sorted: &[f64]) -> f64 {
    let at_least = sorted.len() - sorted.partition_point(|&v| v < observed);
    (1 + at_least) as f64 / (sorted.len() + 1) as f64
}

/// `(1 + #{values >= observed}) / (B + 1)`.
pub fn p_value(observed: f64, null: &NullSample) -> f64 {
    mc_p_value(observed, null.values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLevelInfo {
    pub ell: u32,
    pub m: f64,
    pub d: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub kind: GridKind,
    pub ell_max: u32,
    pub levels: Vec<GridLevelInfo>,
}

impl GridInfo {
    pub fn from_grid(grid: &ApproxSet) -> Self {
        Self {
            kind: grid.kind(),
            ell_max: grid.ell_max(),
            levels: grid
                .levels()
                .iter()
                .map(|l| GridLevelInfo {
                    ell: l.ell,
                    m: l.m,
                    d: l.d,
                    count: l.count(grid.n()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableBody {
    version: u64,
    kind: StatKind,
    n: usize,
    grid: Option<GridInfo>,
    grid_hash: String,
    #[serde(rename = "B")]
    replicates: usize,
    seed: u64,
    alphas: BTreeMap<String, f64>,
    quantiles_sketch: Vec<(f64, f64)>,
    null_values: Vec<f64>,
}

/// Persistable summary of a null distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueTable {
    body: TableBody,
}

fn alpha_key(alpha: f64) -> String {
    format!("{alpha}")
}

impl CriticalValueTable {
    pub fn from_null(null: &NullSample, alphas: &[f64], grid: Option<&ApproxSet>) -> Result<Self> {
        let mut table = Self {
            body: TableBody {
                version: TABLE_VERSION,
                kind: null.kind,
                n: null.n,
                grid: grid.map(GridInfo::from_grid),
                grid_hash: null.grid_hash.clone(),
                replicates: null.replicates(),
                seed: null.seed,
                alphas: BTreeMap::new(),
                quantiles_sketch: SKETCH_LEVELS
                    .iter()
                    .map(|&q| Ok((q, order_statistic_at(null.values(), 1.0 - q)?)))
                    .collect::<Result<_>>()?,
                null_values: null.values().to_vec(),
            },
        };
        table.set_alphas(alphas)?;
        Ok(table)
    }

    /// Replaces the alpha set, recomputing critical values from the stored
    /// null values.
    pub fn set_alphas(&mut self, alphas: &[f64]) -> Result<()> {
        let mut map = BTreeMap::new();
        for &alpha in alphas {
            map.insert(alpha_key(alpha), order_statistic_at(&self.body.null_values, alpha)?);
        }
        self.body.alphas = map;
        Ok(())
    }

    pub fn kind(&self) -> StatKind {
        self.body.kind
    }

    pub fn n(&self) -> usize {
        self.body.n
    }

    pub fn grid_hash(&self) -> &str {
        &self.body.grid_hash
    }

    pub fn grid(&self) -> Option<&GridInfo> {
        self.body.grid.as_ref()
    }

    pub fn replicates(&self) -> usize {
        self.body.replicates
    }

    pub fn seed(&self) -> u64 {
        self.body.seed
    }

    /// `(alpha, critical value)` pairs, largest critical value first.
    pub fn alphas(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .body
            .alphas
            .iter()
            .filter_map(|(k, &v)| k.parse::<f64>().ok().map(|a| (a, v)))
            .collect();
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out
    }

    pub fn quantiles_sketch(&self) -> &[(f64, f64)] {
        &self.body.quantiles_sketch
    }

    /// Critical value at `alpha`, which must be one of the table's levels.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        self.alphas()
            .into_iter()
            .find(|(a, _)| (a - alpha).abs() < 1e-12)
            .map(|(_, v)| v)
            .ok_or_else(|| {
                Error::MissingTable(format!(
                    "alpha = {alpha} (table has {:?})",
                    self.alphas().iter().map(|p| p.0).collect::<Vec<_>>()
                ))
            })
    }

    pub fn p_value(&self, observed: f64) -> f64 {
        mc_p_value(observed, &self.body.null_values)
    }

    pub fn null_sample(&self) -> NullSample {
        NullSample {
            kind: self.body.kind,
            n: self.body.n,
            grid_hash: self.body.grid_hash.clone(),
            seed: self.body.seed,
            values: self.body.null_values.clone(),
        }
    }

    /// Fails with `GridMismatch` unless the table was built for this
    /// statistic, sample size and interval family.
    pub fn check_compatible(&self, evaluator: &Evaluator) -> Result<()> {
        if self.kind() != evaluator.kind() {
            return Err(Error::GridMismatch(format!(
                "table is for {}, statistic is {}",
                self.kind(),
                evaluator.kind()
            )));
        }
        if self.n() != evaluator.n() {
            return Err(Error::GridMismatch(format!(
                "table was calibrated at n = {}, sample has n = {}",
                self.n(),
                evaluator.n()
            )));
        }
        if self.grid_hash() != evaluator.grid_hash() {
            return Err(Error::GridMismatch(format!(
                "table grid hash {} does not match {}",
                self.grid_hash(),
                evaluator.grid_hash()
            )));
        }
        Ok(())
    }

    /// Serialized form, byte-identical for identical tables.
    pub fn to_json(&self) -> Result<String> {
        let mut value = body_value(&self.body)?;
        let sum = checksum(&value);
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("checksum".into(), sum.into());
        }
        let mut text = serde_json::to_string_pretty(&value)
            .map_err(|e| Error::CorruptTable(format!("cannot serialize table: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::CorruptTable(format!("not a table document: {e}")))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptTable("missing version field".into()))?;
        if version != TABLE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: TABLE_VERSION,
            });
        }
        let stored = value
            .as_object_mut()
            .and_then(|map| map.remove("checksum"))
            .and_then(|v| v.as_str().map(str::to_owned))
            .ok_or_else(|| Error::CorruptTable("missing checksum".into()))?;
        if checksum(&value) != stored {
            return Err(Error::CorruptTable("checksum mismatch".into()));
        }
        let body: TableBody = serde_json::from_value(value)
            .map_err(|e| Error::CorruptTable(format!("malformed table: {e}")))?;
        if body.null_values.len() != body.replicates
            || body.null_values.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::CorruptTable("null values inconsistent with B".into()));
        }
        Ok(Self { body })
    }
}

fn body_value(body: &TableBody) -> Result<serde_json::Value> {
    serde_json::to_value(body)
        .map_err(|e| Error::CorruptTable(format!("cannot serialize table: {e}")))
}

/// sha256 of the compact rendering; object keys are sorted, so the digest
/// does not depend on field order in the file.
fn checksum(value: &serde_json::Value) -> String {
    Sha256::digest(value.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn save_table(table: &CriticalValueTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write-then-rename so concurrent readers never see a partial table
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(
        ".{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, table.to_json()?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: &Path) -> Result<CriticalValueTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CriticalValueTable::from_json(&text)
}

/// Calibrates `evaluator` and packages the result as a table.
pub fn calibrate(
    evaluator: &Evaluator,
    replicates: usize,
    seed: u64,
    alphas: &[f64],
    options: CalibrationOptions,
) -> Result<CriticalValueTable> {
    let null = simulate_null_with(evaluator, replicates, seed, options)?;
    CriticalValueTable::from_null(&null, alphas, evaluator.grid())
}

/// On-disk table cache keyed by `(kind, n, grid hash, B, seed)`.
#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, evaluator: &Evaluator, replicates: usize, seed: u64) -> PathBuf {
        let hash = evaluator.grid_hash().replace(':', "-");
        self.dir.join(format!(
            "{}-n{}-{}-B{}-s{}.json",
            evaluator.kind(),
            evaluator.n(),
            hash,
            replicates,
            seed
        ))
    }

    /// Loads a cached table or calibrates and stores a new one.
    pub fn get_or_calibrate(
        &self,
        evaluator: &Evaluator,
        replicates: usize,
        seed: u64,
        alphas: &[f64],
        options: CalibrationOptions,
    ) -> Result<CriticalValueTable> {
        let path = self.path_for(evaluator, replicates, seed);
        if path.exists() {
            if let Ok(mut table) = load_table(&path) {
                if table.check_compatible(evaluator).is_ok()
                    && table.replicates() == replicates
                    && table.seed() == seed
                {
                    table.set_alphas(alphas)?;
                    return Ok(table);
                }
            }
        }
        let table = calibrate(evaluator, replicates, seed, alphas, options)?;
        save_table(&table, &path)?;
        Ok(table)
    }
}
