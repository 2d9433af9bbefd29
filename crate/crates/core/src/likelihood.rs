//! Binomial log likelihood ratio kernels.
//!
//! `a` is the null mass `F0(I)` of an interval and `b` its empirical mass
//! `F_n(I)`. The statistic compares a two-cell multinomial with cell
//! probabilities `(b, 1-b)` against `(a, 1-a)`; natural logarithms throughout.

use crate::error::{Error, Result};

/// Two-sided kernel without argument checks. Terms with a vanishing
/// coefficient are dropped so `b` in `{0, 1}` gives the exact limit.
#[inline]
pub(crate) fn llr_two(a: f64, b: f64, n: f64) -> f64 {
    let mut s = 0.0;
    if b > 0.0 {
        s += b * (b / a).ln();
    }
    if b < 1.0 {
        s += (1.0 - b) * ((1.0 - b) / (1.0 - a)).ln();
    }
    // round-off can push the divergence a hair below zero near b == a
    (n * s).max(0.0)
}

/// One-sided (elevation) kernel without argument checks.
#[inline]
pub(crate) fn llr_left(a: f64, b: f64, n: f64) -> f64 {
    if b > a {
        llr_two(a, b, n)
    } else {
        0.0
    }
}

fn check(a: f64, b: f64, n: usize) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::domain(format!("null mass a = {a} must lie in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::domain(format!("empirical mass b = {b} must lie in [0, 1]")));
    }
    if n == 0 {
        return Err(Error::domain("sample size n must be positive"));
    }
    Ok(())
}

/// `n b log(b/a) + n (1-b) log((1-b)/(1-a))` when `b > a`, else 0.
pub fn log_lr_left(a: f64, b: f64, n: usize) -> Result<f64> {
    check(a, b, n)?;
    Ok(llr_left(a, b, n as f64))
}

/// Two-sided version: no indicator.
pub fn log_lr_two(a: f64, b: f64, n: usize) -> Result<f64> {
    check(a, b, n)?;
    Ok(llr_two(a, b, n as f64))
}

/// Deficit version: nonzero only when `b < a`.
pub fn log_lr_right(a: f64, b: f64, n: usize) -> Result<f64> {
    check(a, b, n)?;
    Ok(if a > b { llr_two(a, b, n as f64) } else { 0.0 })
}

/// `sqrt(2 * log_lr_left(a, b, n))`.
pub fn sqrt2_log_lr(a: f64, b: f64, n: usize) -> Result<f64> {
    Ok((2.0 * log_lr_left(a, b, n)?).sqrt())
}

/// Tail bound `exp(-t^2/2)` for `sqrt(2 logLR)` on a fixed interval.
pub fn subgaussian_bound(t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::domain(format!("t = {t} must be positive")));
    }
    Ok((-0.5 * t * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `P(logLR_left(U_(k) - U_(j), p) > t)`.
    Left,
    /// `P(logLR_right(U_(k) - U_(j), p) > t)`.
    Right,
    /// `P(sqrt(2 logLR_two(U_(k) - U_(j), p)) > t)`.
    TwoSqrt,
}

/// Upper bound on the tail of the likelihood ratio evaluated at a random
/// order-statistic spacing `U_(k) - U_(j) ~ Beta(k-j, n+1-k+j)` against a
/// fixed mass `p`, where `p_jk = (k-j)/(n+1)`. Capped at 1.
pub fn lemma_tail_bound(p_jk: f64, p: f64, t: f64, n: usize, side: TailSide) -> Result<f64> {
    if !(p_jk > 0.0 && p_jk < 1.0) {
        return Err(Error::domain(format!("p_jk = {p_jk} must lie in (0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p = {p} must lie in (0, 1)")));
    }
    if t.is_nan() || t <= 0.0 {
        return Err(Error::domain(format!("t = {t} must be positive")));
    }
    if n == 0 {
        return Err(Error::domain("sample size n must be positive"));
    }
    let nf = n as f64;
    let inflate = (nf + 1.0) / nf;
    let var = p_jk * (1.0 - p_jk);
    let exponent = match side {
        TailSide::Left => {
            let shrink = if p_jk > p { p_jk } else { 0.0 };
            let drift = nf * (p - p_jk) * (p - shrink) / var;
            -(p_jk / p) * inflate * (t - drift)
        }
        TailSide::Right => {
            let shrink = if p_jk < p { 1.0 - p_jk } else { 0.0 };
            let drift = nf * (p_jk - p) * (1.0 - p - shrink) / var;
            -((1.0 - p_jk) / (1.0 - p)) * inflate * (t - drift)
        }
        TailSide::TwoSqrt => {
            let scale = (p_jk / p).min((1.0 - p_jk) / (1.0 - p));
            let ind = if p > p_jk { 1.0 } else { 0.0 };
            let drift = nf * (p - p_jk) / (ind - p_jk);
            std::f64::consts::LN_2 - scale * inflate * t * t / 2.0 + drift
        }
    };
    Ok(exponent.exp().min(1.0))
}
