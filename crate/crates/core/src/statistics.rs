//! The scan `M_n`, the penalized scans `P_n`, `P_n^0`, `P_n^all` and the
//! condensed average likelihood ratio `A_n^cond`.
//!
//! All statistics read the sample only through its sorted PIT values.
//! Interval `(j, k)` (1-based order-statistic indices, `j < k`) has null mass
//! `u_(k) - u_(j)` and empirical mass `(k - j + 1)/n` when closed, `(k - j)/n`
//! when half-open. Pairs whose null mass is exactly 0 or 1 (ties, or a CDF
//! table with flat stretches) are skipped.
//!
//! The maximum-type statistics prune pairs that provably cannot beat the
//! running maximum. For a fixed left end `j` the null mass `a` only grows with
//! `k`, `logLR` is non-increasing in `a`, and
//! `logLR(a, b) <= n (b - a)^2 / (a (1 - a))`; together these bound every
//! later pair of the same row by a function of the current `a`. Pruned pairs
//! are strictly below the running maximum, so the result (value and
//! lexicographically smallest argmax) is the same as the exhaustive loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{short_hash, ApproxSet, GridKind, IntervalIdx, MIN_N};
use crate::likelihood::llr_left;
use crate::transform::SortedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    /// `M_n` over all pairs `j < k`.
    ScanFull,
    /// `M_n` over pairs with `ln n <= k - j <= n/2`.
    #[serde(rename = "scan", alias = "scan-restricted")]
    ScanRestricted,
    /// `P_n` over the data-dependent scan grid.
    PenScan,
    /// `P_n^0` over the fixed-quantile scan grid.
    PenScanFixed,
    /// `P_n^all` over pairs with `ln n <= k - j <= n/2`.
    PenScanAll,
    /// `log A_n^cond` over the ALR grid.
    CondAlr,
}

impl StatKind {
    pub const ALL: [StatKind; 6] = [
        StatKind::ScanFull,
        StatKind::ScanRestricted,
        StatKind::PenScan,
        StatKind::PenScanFixed,
        StatKind::PenScanAll,
        StatKind::CondAlr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::ScanFull => "scan-full",
            StatKind::ScanRestricted => "scan",
            StatKind::PenScan => "pen-scan",
            StatKind::PenScanFixed => "pen-scan-fixed",
            StatKind::PenScanAll => "pen-scan-all",
            StatKind::CondAlr => "cond-alr",
        }
    }

    /// The approximating set the statistic is defined over, if any.
    pub fn default_grid(self) -> Option<GridKind> {
        match self {
            StatKind::PenScan => Some(GridKind::ScanDataDependent),
            StatKind::PenScanFixed => Some(GridKind::ScanFixedQuantile),
            StatKind::CondAlr => Some(GridKind::AlrDataDependent),
            StatKind::ScanFull | StatKind::ScanRestricted | StatKind::PenScanAll => None,
        }
    }

    /// Whether the statistic loops over all O(n^2) pairs.
    pub fn is_quadratic(self) -> bool {
        matches!(
            self,
            StatKind::ScanFull | StatKind::ScanRestricted | StatKind::PenScanAll
        )
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StatKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or(match s {
                "scan-restricted" => Some(StatKind::ScanRestricted),
                "alr" | "cond.alr" => Some(StatKind::CondAlr),
                "pen.scan" => Some(StatKind::PenScan),
                _ => None,
            })
            .ok_or_else(|| {
                Error::UnsupportedStat(format!(
                    "{s:?} (expected one of scan, scan-full, pen-scan, pen-scan-fixed, pen-scan-all, cond-alr)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub kind: StatKind,
    /// For `CondAlr` this is `log A_n^cond`.
    pub value: f64,
    pub argmax: Option<IntervalIdx>,
    pub n: usize,
    pub grid_hash: String,
}

impl StatisticResult {
    /// Endpoints of the maximizing interval on the PIT scale.
    pub fn pit_interval(&self, sample: &SortedSample) -> Option<(f64, f64)> {
        let idx = self.argmax?;
        Some(match self.kind {
            StatKind::PenScanFixed => {
                let nf = self.n as f64;
                (idx.j as f64 / nf, idx.k as f64 / nf)
            }
            _ => (sample.order_stat(idx.j), sample.order_stat(idx.k)),
        })
    }
}

/// `sqrt(2 ln(e n^2 / ((k - j)(n - k + j))))`.
pub fn penalty_jk(n: usize, j: usize, k: usize) -> f64 {
    penalty_gap(n as f64, (k - j) as f64)
}

#[inline]
fn penalty_gap(nf: f64, gap: f64) -> f64 {
    (2.0 * (std::f64::consts::E * nf * nf / (gap * (nf - gap))).ln()).sqrt()
}

/// `sqrt(2 ln(e / (F (1 - min(F, 1/2)))))`; `+inf` at `F = 0`.
pub fn penalty_mass(f: f64) -> f64 {
    (2.0 * (std::f64::consts::E / (f * (1.0 - f.min(0.5)))).ln()).sqrt()
}

/// Penalties `penalty_jk` indexed by the gap `k - j`, for gaps up to `n/2`.
#[derive(Debug, Clone)]
struct PenaltyTable {
    by_gap: Vec<f64>,
}

impl PenaltyTable {
    fn new(n: usize) -> Self {
        let nf = n as f64;
        let mut by_gap = Vec::with_capacity(n / 2 + 1);
        by_gap.push(f64::INFINITY);
        by_gap.extend((1..=n / 2).map(|g| penalty_gap(nf, g as f64)));
        Self { by_gap }
    }

    #[inline]
    fn get(&self, gap: usize) -> f64 {
        self.by_gap[gap]
    }
}

/// Running maximum with lexicographic tie-break.
#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    j: usize,
    k: usize,
}

impl Best {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            j: usize::MAX,
            k: usize::MAX,
        }
    }

    #[inline]
    fn offer(&mut self, value: f64, j: usize, k: usize) {
        if value > self.value || (value == self.value && (j, k) < (self.j, self.k)) {
            *self = Self { value, j, k };
        }
    }
}

/// Relative shrink applied to the running maximum before pruning, so pruned
/// pairs are strictly below it despite round-off.
const PRUNE_SLACK: f64 = 1e-9;

/// Largest count `c` (in units of observations) such that every later pair
/// of the row with empirical count at most `c` has `logLR <= level`.
#[inline]
fn prune_count(nf: f64, a: f64, level: f64) -> f64 {
    nf * a + (nf * level * a * (1.0 - a)).sqrt() - 1e-7
}

/// Same bound for `sqrt(2 logLR) <= level`.
#[inline]
fn prune_count_sqrt(nf: f64, a: f64, level: f64) -> f64 {
    nf * a + level * (0.5 * nf * a * (1.0 - a)).sqrt() - 1e-7
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_N {
        Err(Error::SampleTooSmall { n, min: MIN_N })
    } else {
        Ok(())
    }
}

fn check_grid(sample: &SortedSample, grid: &ApproxSet, expected: GridKind) -> Result<()> {
    check_n(sample.n())?;
    if grid.n() != sample.n() {
        return Err(Error::GridMismatch(format!(
            "grid built for n = {}, sample has n = {}",
            grid.n(),
            sample.n()
        )));
    }
    if grid.kind() != expected {
        return Err(Error::GridMismatch(format!(
            "expected a {expected} grid, got {}",
            grid.kind()
        )));
    }
    Ok(())
}

/// Inclusive gap range `ln n <= k - j <= n/2`.
pub fn restricted_gaps(n: usize) -> (usize, usize) {
    let nf = n as f64;
    let lo = nf.ln().ceil().max(1.0) as usize;
    (lo, n / 2)
}

fn level_of_gap(n: usize, gap: usize) -> u32 {
    (n as f64 / gap as f64).log2().floor() as u32 + 1
}

fn restriction_hash(name: &str, n: usize) -> String {
    short_hash(&format!("{name};n={n}"))
}

fn finish(
    kind: StatKind,
    n: usize,
    best: Best,
    grid_hash: String,
    half_open: bool,
) -> StatisticResult {
    let argmax = best.value.is_finite().then(|| IntervalIdx {
        j: best.j,
        k: best.k,
        level: level_of_gap(n, best.k - best.j),
        half_open,
    });
    StatisticResult {
        kind,
        value: best.value,
        argmax,
        n,
        grid_hash,
    }
}

/// Row-wise maximum of `logLR(u_k - u_j, (k-j+1)/n)` over `lo <= k - j <= hi`.
fn scan_rows(u: &[f64], lo: usize, hi: usize) -> Best {
    let n = u.len();
    let nf = n as f64;
    let mut best = Best::new();
    for j in 1..n {
        let uj = u[j - 1];
        let top = hi.min(n - j);
        let mut g = lo;
        while g <= top {
            let a = u[j + g - 1] - uj;
            if !(a > 0.0 && a < 1.0) {
                g += 1;
                continue;
            }
            let count = (g + 1) as f64;
            best.offer(llr_left(a, count / nf, nf), j, j + g);
            if best.value > 0.0 {
                let c = prune_count(nf, a, best.value * (1.0 - PRUNE_SLACK));
                // counts <= c are dominated; next candidate has count > c
                g = (g + 1).max(c.floor() as usize);
            } else {
                g += 1;
            }
        }
    }
    best
}

/// Evaluates `M_n`. The unrestricted version includes adjacent pairs.
pub fn scan(sample: &SortedSample, restricted: bool) -> Result<StatisticResult> {
    check_n(sample.n())?;
    Ok(scan_unchecked(sample.values(), restricted))
}

pub(crate) fn scan_unchecked(u: &[f64], restricted: bool) -> StatisticResult {
    let n = u.len();
    let (kind, (lo, hi)) = if restricted {
        (StatKind::ScanRestricted, restricted_gaps(n))
    } else {
        (StatKind::ScanFull, (1, n.saturating_sub(1)))
    };
    let best = scan_rows(u, lo, hi);
    finish(kind, n, best, restriction_hash(kind.name(), n), false)
}

/// `M_n` evaluated over the scan grid instead of all restricted pairs.
pub fn scan_on_grid(sample: &SortedSample, grid: &ApproxSet) -> Result<StatisticResult> {
    check_grid(sample, grid, GridKind::ScanDataDependent)?;
    let u = sample.values();
    let n = u.len();
    let nf = n as f64;
    let mut best = Best::new();
    for level in grid.levels() {
        let (lo, hi, d) = (level.min_gap(), level.max_gap(), level.d);
        let mut j = 1;
        while j + lo <= n {
            let uj = u[j - 1];
            let top = hi.min(n - j);
            let mut g = lo;
            while g <= top {
                let a = u[j + g - 1] - uj;
                if !(a > 0.0 && a < 1.0) {
                    g += d;
                    continue;
                }
                best.offer(llr_left(a, (g + 1) as f64 / nf, nf), j, j + g);
                g += d;
                if best.value > 0.0 {
                    let c = prune_count(nf, a, best.value * (1.0 - PRUNE_SLACK));
                    g = g.max(next_multiple(c.floor() as usize, d));
                }
            }
            j += d;
        }
    }
    Ok(finish(
        StatKind::ScanRestricted,
        n,
        best,
        format!("grid:{}", grid.hash()),
        false,
    ))
}

/// Smallest multiple of `d` that is `>= x`.
#[inline]
fn next_multiple(x: usize, d: usize) -> usize {
    x.div_ceil(d) * d
}

/// End of the pruning window for the penalized row maximum: every gap in
/// `(g, returned]` is strictly below `best`. Returns `g` when nothing can be
/// pruned.
#[inline]
fn penalized_prune_end(
    pen: &PenaltyTable,
    nf: f64,
    a: f64,
    g: usize,
    top: usize,
    best: f64,
) -> usize {
    if !best.is_finite() || g >= top {
        return g;
    }
    let level = best - PRUNE_SLACK * best.abs().max(1.0);
    // optimistic end using the largest penalty in the window, then shrink
    // using the penalty at that end (penalty decreases with the gap)
    let t0 = level + pen.get(g + 1);
    if t0 <= 0.0 {
        return g;
    }
    let end0 = (prune_count_sqrt(nf, a, t0).floor() as usize).saturating_sub(1).min(top);
    if end0 <= g {
        return g;
    }
    let t1 = level + pen.get(end0);
    if t1 <= 0.0 {
        return g;
    }
    let end1 = (prune_count_sqrt(nf, a, t1).floor() as usize).saturating_sub(1).min(end0);
    end1.max(g)
}

fn pen_scan_grid(u: &[f64], grid: &ApproxSet, pen: &PenaltyTable) -> Best {
    let n = u.len();
    let nf = n as f64;
    let mut best = Best::new();
    for level in grid.levels() {
        let (lo, hi, d) = (level.min_gap(), level.max_gap(), level.d);
        let mut j = 1;
        while j + lo <= n {
            let uj = u[j - 1];
            let top = hi.min(n - j);
            let mut g = lo;
            while g <= top {
                let a = u[j + g - 1] - uj;
                if !(a > 0.0 && a < 1.0) {
                    g += d;
                    continue;
                }
                let s = (2.0 * llr_left(a, (g + 1) as f64 / nf, nf)).sqrt();
                best.offer(s - pen.get(g), j, j + g);
                let end = penalized_prune_end(pen, nf, a, g, top, best.value);
                g = next_multiple(end + 1, d);
            }
            j += d;
        }
    }
    best
}

/// `P_n` over the data-dependent scan grid.
pub fn penalized_scan(sample: &SortedSample, grid: &ApproxSet) -> Result<StatisticResult> {
    check_grid(sample, grid, GridKind::ScanDataDependent)?;
    let pen = PenaltyTable::new(sample.n());
    Ok(penalized_scan_with(sample, grid, &pen))
}

fn penalized_scan_with(
    sample: &SortedSample,
    grid: &ApproxSet,
    pen: &PenaltyTable,
) -> StatisticResult {
    let best = pen_scan_grid(sample.values(), grid, pen);
    finish(StatKind::PenScan, sample.n(), best, grid.hash(), false)
}

/// `#{u_i <= i/n}` for `i = 0..=n`.
fn quantile_counts(u: &[f64]) -> Vec<u32> {
    let n = u.len();
    let nf = n as f64;
    let mut counts = Vec::with_capacity(n + 1);
    let mut p = 0;
    for i in 0..=n {
        let x = i as f64 / nf;
        while p < n && u[p] <= x {
            p += 1;
        }
        counts.push(p as u32);
    }
    counts
}

/// `P_n^0` over the fixed-quantile grid: intervals `(j/n, k/n]` with null
/// mass `(k - j)/n`.
pub fn penalized_scan_fixed(sample: &SortedSample, grid: &ApproxSet) -> Result<StatisticResult> {
    check_grid(sample, grid, GridKind::ScanFixedQuantile)?;
    let u = sample.values();
    let n = u.len();
    let nf = n as f64;
    let counts = quantile_counts(u);
    let mut best = Best::new();
    for level in grid.levels() {
        let (lo, hi, d) = (level.min_gap(), level.max_gap(), level.d);
        let mut j = 1;
        while j + lo <= n {
            let top = hi.min(n - j);
            let mut g = lo;
            while g <= top {
                let k = j + g;
                let inside = counts[k] - counts[j];
                if inside > 0 {
                    let a = g as f64 / nf;
                    let b = f64::from(inside) / nf;
                    let s = (2.0 * llr_left(a, b, nf)).sqrt();
                    best.offer(s - penalty_mass(b), j, k);
                }
                g += d;
            }
            j += d;
        }
    }
    Ok(finish(StatKind::PenScanFixed, n, best, grid.hash(), true))
}

/// `P_n^all` over all pairs with `ln n <= k - j <= n/2`. Quadratic.
pub fn penalized_scan_all(sample: &SortedSample) -> Result<StatisticResult> {
    check_n(sample.n())?;
    let pen = PenaltyTable::new(sample.n());
    Ok(penalized_scan_all_with(sample, &pen))
}

fn penalized_scan_all_with(sample: &SortedSample, pen: &PenaltyTable) -> StatisticResult {
    let u = sample.values();
    let n = u.len();
    let nf = n as f64;
    let (lo, hi) = restricted_gaps(n);
    let mut best = Best::new();
    for j in 1..n {
        let uj = u[j - 1];
        let top = hi.min(n - j);
        let mut g = lo;
        while g <= top {
            let a = u[j + g - 1] - uj;
            if !(a > 0.0 && a < 1.0) {
                g += 1;
                continue;
            }
            let s = (2.0 * llr_left(a, (g + 1) as f64 / nf, nf)).sqrt();
            best.offer(s - pen.get(g), j, j + g);
            g = penalized_prune_end(pen, nf, a, g, top, best.value) + 1;
        }
    }
    finish(
        StatKind::PenScanAll,
        n,
        best,
        restriction_hash(StatKind::PenScanAll.name(), n),
        false,
    )
}

/// `log A_n^cond`: log of the average likelihood ratio over the ALR grid,
/// accumulated as a streaming log-sum-exp.
pub fn condensed_alr(sample: &SortedSample, grid: &ApproxSet) -> Result<StatisticResult> {
    check_grid(sample, grid, GridKind::AlrDataDependent)?;
    let u = sample.values();
    let n = u.len();
    let nf = n as f64;
    // every term is >= 0, so the shift starts at 0 and only moves up
    let mut shift = 0.0f64;
    let mut scaled = 0.0f64;
    let mut zeros: u64 = 0;
    let mut terms: u64 = 0;
    for level in grid.levels() {
        let (lo, hi, d) = (level.min_gap(), level.max_gap(), level.d);
        let mut j = 1;
        while j + lo <= n {
            let uj = u[j - 1];
            let top = hi.min(n - j);
            let mut g = lo;
            while g <= top {
                let gap = g;
                g += d;
                let a = u[j + gap - 1] - uj;
                if !(a > 0.0 && a < 1.0) {
                    continue;
                }
                terms += 1;
                let b = gap as f64 / nf;
                if b <= a {
                    zeros += 1;
                    continue;
                }
                let x = llr_left(a, b, nf);
                if x > shift {
                    scaled = scaled * (shift - x).exp() + 1.0;
                    shift = x;
                } else {
                    scaled += (x - shift).exp();
                }
            }
            j += d;
        }
    }
    let value = if terms == 0 {
        f64::NEG_INFINITY
    } else {
        let total = scaled + zeros as f64 * (-shift).exp();
        shift + total.ln() - (terms as f64).ln()
    };
    Ok(StatisticResult {
        kind: StatKind::CondAlr,
        value,
        argmax: None,
        n,
        grid_hash: grid.hash(),
    })
}

/// A statistic bound to one sample size, with its grid and penalty table
/// built once and reused across samples.
#[derive(Debug, Clone)]
pub struct Evaluator {
    kind: StatKind,
    n: usize,
    grid: Option<ApproxSet>,
    penalties: Option<PenaltyTable>,
    grid_hash: String,
}

impl Evaluator {
    pub fn new(kind: StatKind, n: usize) -> Result<Self> {
        Self::with_grid_kind(kind, n, None)
    }

    /// `grid_kind` selects the interval family. It may only differ from the
    /// statistic's own family for the restricted scan, which can be
    /// evaluated over the scan grid.
    pub fn with_grid_kind(kind: StatKind, n: usize, grid_kind: Option<GridKind>) -> Result<Self> {
        check_n(n)?;
        let grid_kind = match (kind, grid_kind) {
            (_, None) => kind.default_grid(),
            (StatKind::ScanRestricted, Some(GridKind::ScanDataDependent)) => {
                Some(GridKind::ScanDataDependent)
            }
            (_, Some(g)) if Some(g) == kind.default_grid() => Some(g),
            (_, Some(g)) => {
                return Err(Error::GridMismatch(format!(
                    "statistic {kind} cannot be evaluated over a {g} grid"
                )))
            }
        };
        let grid = grid_kind.map(|g| ApproxSet::build(n, g)).transpose()?;
        let penalties = matches!(kind, StatKind::PenScan | StatKind::PenScanAll)
            .then(|| PenaltyTable::new(n));
        let grid_hash = match &grid {
            Some(g) if kind == StatKind::ScanRestricted => format!("grid:{}", g.hash()),
            Some(g) => g.hash(),
            None => restriction_hash(kind.name(), n),
        };
        Ok(Self {
            kind,
            n,
            grid,
            penalties,
            grid_hash,
        })
    }

    pub fn kind(&self) -> StatKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Option<&ApproxSet> {
        self.grid.as_ref()
    }

    pub fn grid_hash(&self) -> &str {
        &self.grid_hash
    }

    pub fn evaluate(&self, sample: &SortedSample) -> Result<StatisticResult> {
        if sample.n() != self.n {
            return Err(Error::GridMismatch(format!(
                "evaluator built for n = {}, sample has n = {}",
                self.n,
                sample.n()
            )));
        }
        let grid = self.grid.as_ref();
        let pen = self.penalties.as_ref();
        match self.kind {
            StatKind::ScanFull => scan(sample, false),
            StatKind::ScanRestricted => match grid {
                Some(g) => scan_on_grid(sample, g),
                None => scan(sample, true),
            },
            StatKind::PenScan => Ok(penalized_scan_with(
                sample,
                grid.expect("grid"),
                pen.expect("penalties"),
            )),
            StatKind::PenScanFixed => penalized_scan_fixed(sample, grid.expect("grid")),
            StatKind::PenScanAll => Ok(penalized_scan_all_with(sample, pen.expect("penalties"))),
            StatKind::CondAlr => condensed_alr(sample, grid.expect("grid")),
        }
    }
}
