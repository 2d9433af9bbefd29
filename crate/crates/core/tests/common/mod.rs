//! From-definition reference implementations and goodness-of-fit helpers.
//! Nothing here calls into the crate's statistics or grid code.
#![allow(dead_code)]

/// `x ln(x / y)` with the `0 ln 0 = 0` convention.
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

pub fn llr_ref(a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let v = n as f64 * (xlogx_over(b, a) + xlogx_over(1.0 - b, 1.0 - a));
    v.max(0.0)
}

fn usable(a: f64) -> bool {
    a > 0.0 && a < 1.0
}

fn in_restriction(n: usize, gap: usize) -> bool {
    gap as f64 >= (n as f64).ln() && gap as f64 <= n as f64 / 2.0
}

/// Value and lexicographically first argmax of `M_n`.
pub fn scan_ref(u: &[f64], restricted: bool) -> (f64, Option<(usize, usize)>) {
    let n = u.len();
    let mut best = (f64::NEG_INFINITY, None);
    for j in 1..=n {
        for k in (j + 1)..=n {
            if restricted && !in_restriction(n, k - j) {
                continue;
            }
            let a = u[k - 1] - u[j - 1];
            if !usable(a) {
                continue;
            }
            let v = llr_ref(a, (k - j + 1) as f64 / n as f64, n);
            if v > best.0 {
                best = (v, Some((j, k)));
            }
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RefGrid {
    Scan,
    Alr,
}

/// Every `(j, k)` of the approximating set, straight from the defining
/// conditions.
pub fn grid_pairs_ref(n: usize, grid: RefGrid) -> Vec<(usize, usize)> {
    let ln_n = (n as f64).ln();
    let ell_max = (n as f64 / ln_n).log2().floor() as u32;
    let mut out = Vec::new();
    for ell in 2..=ell_max {
        let m = n as f64 / 2f64.powi(ell as i32);
        let raw = match grid {
            RefGrid::Scan => m / (6.0 * (ell as f64).sqrt()),
            RefGrid::Alr => m.sqrt() * (ell as f64).powf(0.8) / ln_n,
        };
        let d = raw.ceil() as usize;
        for j in (1..=n).step_by(d) {
            for k in (j + 1..=n).step_by(1) {
                let gap = (k - j) as f64;
                if (k - 1) % d == 0 && gap > m && gap <= 2.0 * m {
                    out.push((j, k));
                }
            }
        }
    }
    out
}

fn penalty_ref(n: usize, gap: usize) -> f64 {
    let nf = n as f64;
    let g = gap as f64;
    (2.0 * (std::f64::consts::E * nf * nf / (g * (nf - g))).ln()).sqrt()
}

pub fn pen_scan_ref(u: &[f64]) -> f64 {
    let n = u.len();
    grid_pairs_ref(n, RefGrid::Scan)
        .into_iter()
        .filter(|&(j, k)| usable(u[k - 1] - u[j - 1]))
        .map(|(j, k)| {
            let b = (k - j + 1) as f64 / n as f64;
            (2.0 * llr_ref(u[k - 1] - u[j - 1], b, n)).sqrt() - penalty_ref(n, k - j)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn pen_scan_fixed_ref(u: &[f64]) -> f64 {
    let n = u.len();
    let nf = n as f64;
    grid_pairs_ref(n, RefGrid::Scan)
        .into_iter()
        .filter_map(|(j, k)| {
            let (lo, hi) = (j as f64 / nf, k as f64 / nf);
            let inside = u.iter().filter(|&&x| x > lo && x <= hi).count();
            if inside == 0 {
                return None;
            }
            let f = inside as f64 / nf;
            let pen = (2.0 * (std::f64::consts::E / (f * (1.0 - f.min(0.5)))).ln()).sqrt();
            Some((2.0 * llr_ref((k - j) as f64 / nf, f, n)).sqrt() - pen)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn pen_scan_all_ref(u: &[f64]) -> f64 {
    let n = u.len();
    let mut best = f64::NEG_INFINITY;
    for j in 1..=n {
        for k in (j + 1)..=n {
            let a = u[k - 1] - u[j - 1];
            if !in_restriction(n, k - j) || !usable(a) {
                continue;
            }
            let b = (k - j + 1) as f64 / n as f64;
            best = best.max((2.0 * llr_ref(a, b, n)).sqrt() - penalty_ref(n, k - j));
        }
    }
    best
}

/// Plain average of `exp(logLR)` over the ALR grid (no log-sum-exp).
pub fn alr_naive_average(u: &[f64]) -> f64 {
    let n = u.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, k) in grid_pairs_ref(n, RefGrid::Alr) {
        let a = u[k - 1] - u[j - 1];
        if !usable(a) {
            continue;
        }
        sum += llr_ref(a, (k - j) as f64 / n as f64, n).exp();
        count += 1;
    }
    sum / count as f64
}

/// One-sample KS distance of sorted values against U[0, 1].
pub fn ks_uniform_distance(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(distance: f64, effective_n: f64) -> f64 {
    let sq = effective_n.sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * distance)
}

pub fn ks_uniform_p_value(sorted: &[f64]) -> f64 {
    ks_p(ks_uniform_distance(sorted), sorted.len() as f64)
}

/// Two-sample KS p-value.
pub fn ks_two_sample_p_value(x: &[f64], y: &[f64]) -> f64 {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    ks_p(d, nx * ny / (nx + ny))
}

/// Empirical `q`-quantile by the `ceil(q B)`-th order statistic.
pub fn upper_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let r = ((q * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    v[r - 1]
}
