//! Multiscale approximating sets of order-statistic intervals.
//!
//! Level `ℓ` holds the index pairs `(j, k)` with `j, k ∈ {1 + i d_ℓ}`,
//! `k <= n` and `m_ℓ < k - j <= 2 m_ℓ`, where `m_ℓ = n 2^-ℓ`. Levels run from
//! 2 (intervals holding up to half the sample) to
//! `ℓ_max = floor(log2(n / ln n))` (intervals holding about `ln n` points).
//! The spacing `d_ℓ` is what distinguishes the scan grid from the grid used
//! by the condensed average likelihood ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest sample size accepted by any grid or statistic.
pub const MIN_N: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Closed intervals `[X_(j), X_(k)]`, `d_ℓ = ceil(m_ℓ / (6 sqrt ℓ))`.
    ScanDataDependent,
    /// Same index pairs, but endpoints at the null quantiles `j/n`, `k/n`.
    ScanFixedQuantile,
    /// Half-open intervals `(X_(j), X_(k)]`, `d_ℓ = ceil(sqrt(m_ℓ) ℓ^0.8 / ln n)`.
    AlrDataDependent,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::ScanDataDependent => "scan",
            GridKind::ScanFixedQuantile => "scan-fixed",
            GridKind::AlrDataDependent => "alr",
        }
    }

    fn spacing(self, n: usize, ell: u32, m: f64) -> usize {
        let d = match self {
            GridKind::ScanDataDependent | GridKind::ScanFixedQuantile => {
                m / (6.0 * f64::from(ell).sqrt())
            }
            GridKind::AlrDataDependent => m.sqrt() * f64::from(ell).powf(0.8) / (n as f64).ln(),
        };
        (d.ceil() as usize).max(1)
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan" | "scan-data-dependent" => Ok(GridKind::ScanDataDependent),
            "scan-fixed" | "fixed" | "scan-fixed-quantile" => Ok(GridKind::ScanFixedQuantile),
            "alr" | "alr-data-dependent" => Ok(GridKind::AlrDataDependent),
            other => Err(Error::domain(format!(
                "unknown grid kind {other:?} (expected scan, scan-fixed or alr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub ell: u32,
    /// `n 2^-ℓ`; pairs satisfy `m < k - j <= 2m`.
    pub m: f64,
    pub d: usize,
}

impl LevelSpec {
    /// Smallest admissible gap `k - j` (a multiple of `d`).
    pub fn min_gap(&self) -> usize {
        let lo = self.m.floor() as usize + 1;
        lo.div_ceil(self.d) * self.d
    }

    /// Largest admissible gap `k - j` (a multiple of `d`).
    pub fn max_gap(&self) -> usize {
        let hi = (2.0 * self.m).floor() as usize;
        hi / self.d * self.d
    }

    /// Number of pairs at this level for sample size `n`.
    pub fn count(&self, n: usize) -> usize {
        let (lo, hi) = (self.min_gap(), self.max_gap());
        if lo > hi {
            return 0;
        }
        (lo..=hi)
            .step_by(self.d)
            .take_while(|&g| g < n)
            .map(|g| (n - 1 - g) / self.d + 1)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntervalIdx {
    pub j: usize,
    pub k: usize,
    pub level: u32,
    pub half_open: bool,
}

/// An immutable approximating set for one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSet {
    n: usize,
    kind: GridKind,
    ell_max: u32,
    levels: Vec<LevelSpec>,
}

/// `floor(log2(n / ln n))`.
pub fn ell_max(n: usize) -> u32 {
    let nf = n as f64;
    (nf / nf.ln()).log2().floor().max(0.0) as u32
}

impl ApproxSet {
    pub fn build(n: usize, kind: GridKind) -> Result<Self> {
        if n < MIN_N {
            return Err(Error::SampleTooSmall { n, min: MIN_N });
        }
        let ell_max = ell_max(n);
        let levels = (2..=ell_max)
            .map(|ell| {
                let m = n as f64 * (-f64::from(ell)).exp2();
                LevelSpec {
                    ell,
                    m,
                    d: kind.spacing(n, ell, m),
                }
            })
            .collect();
        Ok(Self {
            n,
            kind,
            ell_max,
            levels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn ell_max(&self) -> u32 {
        self.ell_max
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    /// Half-open intervals `(X_(j), X_(k)]` are used by the ALR grid only.
    pub fn half_open(&self) -> bool {
        self.kind == GridKind::AlrDataDependent
    }

    pub fn level(&self, ell: u32) -> Result<&LevelSpec> {
        if ell < 2 || ell > self.ell_max {
            return Err(Error::InvalidLevel {
                ell,
                ell_max: self.ell_max,
            });
        }
        Ok(&self.levels[(ell - 2) as usize])
    }

    /// Pairs of level `ell` in lexicographic `(j, k)` order.
    pub fn enumerate_level(&self, ell: u32) -> Result<LevelPairs> {
        let spec = *self.level(ell)?;
        Ok(LevelPairs::new(self.n, spec, self.half_open()))
    }

    /// All pairs, level by level.
    pub fn iter(&self) -> impl Iterator<Item = IntervalIdx> + '_ {
        self.levels
            .iter()
            .flat_map(move |spec| LevelPairs::new(self.n, *spec, self.half_open()))
    }

    pub fn level_count(&self, ell: u32) -> Result<usize> {
        Ok(self.level(ell)?.count(self.n))
    }

    /// Total number of intervals in the set.
    pub fn cardinality(&self) -> usize {
        self.levels.iter().map(|l| l.count(self.n)).sum()
    }

    /// Short stable identifier of `(kind, n, levels)`.
    pub fn hash(&self) -> String {
        let mut desc = format!("{};n={};ell_max={}", self.kind.name(), self.n, self.ell_max);
        for l in &self.levels {
            desc.push_str(&format!(";{}:{}:{}", l.ell, l.m, l.d));
        }
        short_hash(&desc)
    }
}

pub(crate) fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Builds the approximating set of the given kind for sample size `n`.
pub fn build_grid(n: usize, kind: GridKind) -> Result<ApproxSet> {
    ApproxSet::build(n, kind)
}

/// Exact number of intervals in `set`.
pub fn grid_cardinality(set: &ApproxSet) -> usize {
    set.cardinality()
}

/// Lazy enumeration of one level.
#[derive(Debug, Clone)]
pub struct LevelPairs {
    n: usize,
    spec: LevelSpec,
    half_open: bool,
    max_gap: usize,
    min_gap: usize,
    j: usize,
    gap: usize,
}

impl LevelPairs {
    fn new(n: usize, spec: LevelSpec, half_open: bool) -> Self {
        let min_gap = spec.min_gap();
        Self {
            n,
            spec,
            half_open,
            max_gap: spec.max_gap(),
            min_gap,
            j: 1,
            gap: min_gap,
        }
    }
}

impl Iterator for LevelPairs {
    type Item = IntervalIdx;

    fn next(&mut self) -> Option<IntervalIdx> {
        loop {
            if self.min_gap > self.max_gap || self.j + self.min_gap > self.n {
                return None;
            }
            let k = self.j + self.gap;
            if self.gap <= self.max_gap && k <= self.n {
                self.gap += self.spec.d;
                return Some(IntervalIdx {
                    j: self.j,
                    k,
                    level: self.spec.ell,
                    half_open: self.half_open,
                });
            }
            self.j += self.spec.d;
            self.gap = self.min_gap;
        }
    }
}
