mod common;

use bumpscan::calibration::{null_draw, simulate_null};
use bumpscan::grids::{build_grid, GridKind};
use bumpscan::rng::replicate_rng;
use bumpscan::statistics::{Evaluator, StatKind};
use bumpscan::transform::{pit_transform, NullCdf, RawSample, SortedSample};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn eval(kind: StatKind, u: &SortedSample) -> bumpscan::StatisticResult {
    Evaluator::new(kind, u.n()).unwrap().evaluate(u).unwrap()
}

#[test]
fn grids_match_definition() {
    for n in [26usize, 100, 333, 1000] {
        for (kind, reference) in [
            (GridKind::ScanDataDependent, RefGrid::Scan),
            (GridKind::ScanFixedQuantile, RefGrid::Scan),
            (GridKind::AlrDataDependent, RefGrid::Alr),
        ] {
            let got: Vec<(usize, usize)> =
                build_grid(n, kind).unwrap().iter().map(|i| (i.j, i.k)).collect();
            assert_eq!(got, grid_pairs_ref(n, reference), "n={n} {kind}");
        }
    }
}

#[test]
fn statistics_match_brute_force() {
    for n in [60usize, 200, 500] {
        for seed in 0..4u64 {
            let u = null_draw(n, 1000 + seed, 0);
            let v = u.values();

            let (value, argmax) = scan_ref(v, true);
            let got = eval(StatKind::ScanRestricted, &u);
            assert!((got.value - value).abs() <= 1e-12, "scan n={n}");
            assert_eq!(got.argmax.map(|a| (a.j, a.k)), argmax);

            let (value, argmax) = scan_ref(v, false);
            let got = eval(StatKind::ScanFull, &u);
            assert!((got.value - value).abs() <= 1e-12, "scan-full n={n}");
            assert_eq!(got.argmax.map(|a| (a.j, a.k)), argmax);

            let checks = [
                (StatKind::PenScan, pen_scan_ref(v)),
                (StatKind::PenScanFixed, pen_scan_fixed_ref(v)),
                (StatKind::PenScanAll, pen_scan_all_ref(v)),
            ];
            for (kind, expect) in checks {
                let got = eval(kind, &u).value;
                assert!((got - expect).abs() <= 1e-12, "{kind} n={n}: {got} vs {expect}");
            }

            let avg = alr_naive_average(v);
            let got = eval(StatKind::CondAlr, &u).value.exp();
            assert!((got - avg).abs() <= 1e-10 * avg, "cond-alr n={n}: {got} vs {avg}");
        }
    }
}

#[test]
fn planted_bump_matches_brute_force() {
    // strong signals exercise the pruning paths far from the null
    let mut rng = replicate_rng(5, 9, 0);
    for n in [200usize, 400] {
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                let x: f64 = rand::Rng::random(&mut rng);
                if i % 3 == 0 {
                    0.4 + 0.05 * x
                } else {
                    x
                }
            })
            .collect();
        u.sort_by(f64::total_cmp);
        let s = SortedSample::from_sorted(u).unwrap();
        let v = s.values();
        assert!((eval(StatKind::ScanRestricted, &s).value - scan_ref(v, true).0).abs() <= 1e-12);
        assert!((eval(StatKind::PenScan, &s).value - pen_scan_ref(v)).abs() <= 1e-12);
        assert!((eval(StatKind::PenScanAll, &s).value - pen_scan_all_ref(v)).abs() <= 1e-12);
        assert!((eval(StatKind::PenScanFixed, &s).value - pen_scan_fixed_ref(v)).abs() <= 1e-12);
        let log_avg = alr_naive_average(v).ln();
        assert!((eval(StatKind::CondAlr, &s).value - log_avg).abs() <= 1e-10 * log_avg.abs().max(1.0));
    }
}

#[test]
fn results_depend_only_on_sorted_pit_values() {
    let mut rng = replicate_rng(77, 3, 0);
    let mut x: Vec<f64> = (0..400).map(|_| rand::Rng::random::<f64>(&mut rng) * 5.0).collect();
    let f0 = NullCdf::exponential(0.7).unwrap();
    let base = pit_transform(&RawSample::new(x.clone()).unwrap(), &f0).unwrap();
    x.shuffle(&mut rng);
    let shuffled = pit_transform(&RawSample::new(x).unwrap(), &f0).unwrap();
    for kind in StatKind::ALL {
        assert_eq!(eval(kind, &base), eval(kind, &shuffled), "{kind}");
    }
}

#[test]
fn pen_scan_all_null_quantile_is_moderate() {
    let null = simulate_null(StatKind::PenScanAll, 1000, 500, 31).unwrap();
    let q = upper_quantile(null.values(), 0.95);
    assert!(q.is_finite() && q < 4.0, "q = {q}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scan_dominance_and_finiteness(seed in any::<u64>(), n in 26usize..300) {
        let u = null_draw(n, seed, 0);
        let full = eval(StatKind::ScanFull, &u).value;
        let restricted = eval(StatKind::ScanRestricted, &u).value;
        prop_assert!(full >= restricted);
        for kind in StatKind::ALL {
            let r = eval(kind, &u);
            prop_assert!(r.value.is_finite(), "{} gave {}", kind, r.value);
            if kind != StatKind::CondAlr {
                prop_assert!(r.argmax.is_some());
            }
        }
    }

    #[test]
    fn penalized_all_dominates_grid(seed in any::<u64>(), n in 26usize..400) {
        let u = null_draw(n, seed, 1);
        let v = u.values();
        let ln_n = (n as f64).ln();
        let nf = n as f64;
        // grid pairs inside the P_n^all restriction only
        let restricted_grid_max = grid_pairs_ref(n, RefGrid::Scan)
            .into_iter()
            .filter(|&(j, k)| (k - j) as f64 >= ln_n && (k - j) as f64 <= nf / 2.0)
            .filter(|&(j, k)| v[k - 1] - v[j - 1] > 0.0 && v[k - 1] - v[j - 1] < 1.0)
            .map(|(j, k)| {
                let g = (k - j) as f64;
                let pen = (2.0 * (std::f64::consts::E * nf * nf / (g * (nf - g))).ln()).sqrt();
                (2.0 * llr_ref(v[k - 1] - v[j - 1], (g + 1.0) / nf, n)).sqrt() - pen
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(eval(StatKind::PenScanAll, &u).value >= restricted_grid_max - 1e-12);
    }
}
