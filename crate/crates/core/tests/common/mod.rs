#![allow(dead_code)]

use std::f64::consts::PI;

use bubble_spectra::lppl::LpplParams;
use bubble_spectra::ou::OuParams;
use bubble_spectra::timeseries::LogSeries;

/// Super-exponential bubble with visible log-periodic oscillations.
pub fn bubble_lppl() -> LpplParams {
    LpplParams {
        a: 10.0,
        b: 0.008,
        c: 0.4,
        m: 0.7,
        omega: 2.0 * PI,
        phi: PI,
        t_crit: 26000.0,
        n: 25000,
    }
}

/// Slowly mean-reverting noise paired with [`bubble_lppl`].
pub fn bubble_noise() -> OuParams {
    OuParams::new(2000.0, 1.5e-5f64.sqrt()).unwrap()
}

/// Pure log-periodic signal whose phase closes at the horizon.
pub fn fm_lppl(m: f64) -> LpplParams {
    let n = 25000usize;
    let omega = 3.0 * PI;
    let t_crit = n as f64 / (1.0 - (-11.0 * PI / omega).exp());
    LpplParams {
        a: 1.0,
        b: 1.0,
        c: -1.0,
        m,
        omega,
        phi: -omega * (t_crit - n as f64).ln(),
        t_crit,
        n,
    }
}

pub fn mse(a: &LogSeries, b: &LogSeries) -> f64 {
    let (a, b) = (a.values(), b.values());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `count` half-open index bands `[lo, hi)` with geometrically spaced edges
/// between `first` and `last + 1`.
pub fn log_bands(first: usize, last: usize, count: usize) -> Vec<(usize, usize)> {
    let (a, b) = ((first as f64).ln(), ((last + 1) as f64).ln());
    let mut edges: Vec<usize> = (0..=count)
        .map(|j| (a + (b - a) * j as f64 / count as f64).exp().round() as usize)
        .collect();
    edges.dedup();
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn band_mean(v: &[f64], band: (usize, usize)) -> f64 {
    mean(&v[band.0..band.1])
}

/// Elementwise mean of equally long vectors.
pub fn ensemble_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len() as f64;
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}
