mod common;

use std::path::PathBuf;

use bumpscan::calibration::{
    critical_value, null_draw, p_value, simulate_null, CalibrationOptions, TableCache,
};
use bumpscan::rng::replicate_rng;
use bumpscan::statistics::{Evaluator, StatKind};
use bumpscan::transform::{pit_transform, NullCdf, RawSample};
use rand_distr::{Distribution, Exp};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn table_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("bumpscan-tables")
}

#[test]
fn null_sample_is_thread_count_invariant() {
    for kind in [StatKind::PenScan, StatKind::CondAlr, StatKind::ScanRestricted] {
        let one = pool(1).install(|| simulate_null(kind, 300, 64, 5).unwrap());
        let many = pool(4).install(|| simulate_null(kind, 300, 64, 5).unwrap());
        assert_eq!(one, many);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(one.values()), bits(many.values()));
    }
}

#[test]
fn p_values_are_super_uniform() {
    let null = simulate_null(StatKind::PenScan, 100, 199, 1).unwrap();
    let ev = Evaluator::new(StatKind::PenScan, 100).unwrap();
    let trials = 2000u64;
    let p: Vec<f64> = (0..trials)
        .map(|b| p_value(ev.evaluate(&null_draw(100, 2, b)).unwrap().value, &null))
        .collect();
    assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
    let slack = 2.0 / 200.0;
    for alpha in [0.01, 0.05, 0.1, 0.25] {
        let rate = p.iter().filter(|&&x| x <= alpha).count() as f64 / trials as f64;
        // binomial noise over 2000 trials on top of the stated slack
        let se = (alpha * (1.0 - alpha) / trials as f64).sqrt();
        assert!(rate <= alpha + slack + 3.0 * se, "alpha={alpha} rate={rate}");
    }
}

/// Standard error of the empirical q-quantile via the order-statistic band.
fn quantile_se(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len() as f64;
    let h = (q * (1.0 - q) / b).sqrt();
    let at = |p: f64| sorted[((p * b).ceil() as usize).clamp(1, sorted.len()) - 1];
    (at(q + h) - at(q - h)) / 2.0
}

#[test]
fn exponential_data_gives_the_same_null_law() {
    let n = 300;
    let reps = 2000u64;
    let ev = Evaluator::new(StatKind::PenScan, n).unwrap();
    let f0 = NullCdf::exponential(3.0).unwrap();
    let exp = Exp::new(3.0).unwrap();
    let mut from_exp: Vec<f64> = (0..reps)
        .map(|b| {
            let mut rng = replicate_rng(99, 0, b);
            let x: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
            let u = pit_transform(&RawSample::new(x).unwrap(), &f0).unwrap();
            ev.evaluate(&u).unwrap().value
        })
        .collect();
    from_exp.sort_by(f64::total_cmp);
    let uniform = simulate_null(StatKind::PenScan, n, reps as usize, 100).unwrap();
    let qa = common::upper_quantile(&from_exp, 0.95);
    let qb = critical_value(&uniform, 0.05).unwrap();
    let se = quantile_se(&from_exp, 0.95).hypot(quantile_se(uniform.values(), 0.95));
    assert!((qa - qb).abs() < 3.0 * se, "{qa} vs {qb} (se {se})");
}

#[test]
fn pen_scan_quantile_is_stable_across_seeds() {
    let cache = TableCache::new(table_dir());
    let ev = Evaluator::new(StatKind::PenScan, 10_000).unwrap();
    let opts = CalibrationOptions::default();
    let a = cache.get_or_calibrate(&ev, 10_000, 1, &[0.05], opts).unwrap();
    let b = cache.get_or_calibrate(&ev, 10_000, 2, &[0.05], opts).unwrap();
    let (qa, qb) = (a.critical_value(0.05).unwrap(), b.critical_value(0.05).unwrap());
    assert!(qa.is_finite() && qb.is_finite());
    assert!((qa - qb).abs() <= 0.15, "{qa} vs {qb}");
}
