//! Checks against independently computed reference values.

mod common;

use bubble_spectra::estimators::{band_bound, mle_from_levels, reconstruct_nu0};
use bubble_spectra::lppl::{lppl_eval, normalized_power_law};
use bubble_spectra::timeseries::LogSeries;
use proptest::prelude::*;

use common::*;

#[test]
fn lppl_matches_extended_precision() {
    // evaluated with 50 significant digits
    let reference = [
        (0.0, 2.134997494496796593118869),
        (1.0, 2.136031570068403922410266),
        (12345.0, 1.234999673672706777762693),
        (24999.0, 9.330835054382234414076396),
    ];
    let p = bubble_lppl();
    for (t, want) in reference {
        let got = lppl_eval(&p, t).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs(), "t={t}: {got} vs {want}");
    }
}

fn normalized_area(m: f64, t_crit: f64) -> f64 {
    let p = normalized_power_law(m, t_crit).unwrap();
    let q = (1.0 / m).ceil() + 1.0;
    let f = |s: f64| {
        if s == 0.0 {
            return 0.0;
        }
        let t = t_crit * (1.0 - s.powf(q));
        let l = if t < t_crit { lppl_eval(&p, t).unwrap() } else { p.a };
        l * t_crit * q * s.powf(q - 1.0)
    };
    simpson(f, 0.0, 1.0, 100_000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_power_law_has_half_unit_area(m in 0.05f64..=1.0, t_crit in 10.0f64..1e5) {
        let area = normalized_area(m, t_crit);
        prop_assert!((area - 0.5).abs() <= 1e-6, "m={} T={} area={}", m, t_crit, area);
    }

    #[test]
    fn band_bound_summation_is_accurate(
        pg in prop::collection::vec(0.0f64..1e3, 64),
        h in 1usize..32,
        width in 0usize..31,
    ) {
        let big_n = 2 * (pg.len() - 1);
        let freqs: Vec<f64> = (0..pg.len()).map(|i| i as f64 / big_n as f64).collect();
        let k = (h + width).min(pg.len() - 1);
        let num = compensated_sum((h..=k).map(|i| pg[i]));
        let den = compensated_sum(
            (h..=k).map(|i| 0.5 / (std::f64::consts::PI * freqs[i]).sin().powi(2)),
        );
        let want = 2.0 * num / den;
        let got = band_bound(&pg, &freqs, (h, k));
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
    }
}

/// The closed form evaluated directly from its definition.
fn nu0_direct(diffs: &[f64]) -> f64 {
    let n = diffs.len() + 1;
    let alpha: Vec<f64> = (0..n)
        .map(|t| diffs[..t].iter().sum())
        .collect();
    let m = (n - 1) as f64;
    let a_x: f64 = alpha[..n - 1].iter().sum();
    let a_y: f64 = alpha[1..].iter().sum();
    let a_xy: f64 = (1..n).map(|i| alpha[i - 1] * alpha[i]).sum();
    let a_xx: f64 = alpha[..n - 1].iter().map(|a| a * a).sum();
    (a_y * a_xx - a_x * a_xy) / (m * a_xy - m * a_xx + a_x * a_x - a_y * a_x)
}

#[test]
fn nu0_exact_on_noiseless_ar1_grid() {
    for n in 4..=10 {
        for nu0 in [-1.0, 0.5, 1.0, 2.0] {
            for a in [0.2, 0.5, 0.9] {
                let levels: Vec<f64> = (0..n).map(|t| nu0 * f64::powi(a, t as i32)).collect();
                let diffs: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
                let got = reconstruct_nu0(&diffs).unwrap();
                assert!((got - nu0).abs() <= 1e-9, "n={n} nu0={nu0} a={a}: {got}");
                assert!((nu0_direct(&diffs) - nu0).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn mle_exact_on_noiseless_decay() {
    for tau in [2.0, 5.0, 50.0] {
        let nu = LogSeries::new((0..1000).map(|i| (-(i as f64) / tau).exp()).collect()).unwrap();
        let est = mle_from_levels(&nu).unwrap();
        let t = est.tau_hat.finite().unwrap();
        assert!((t - tau).abs() <= 1e-9 * tau, "tau={tau}: {t}");
        assert!(est.sigma2_hat.unwrap().abs() <= 1e-9);
    }
}
