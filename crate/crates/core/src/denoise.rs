//! Signal-to-noise ratio, Wiener filtering and the cutoff low-pass filter.
//!
//! Both filters are non-causal bin surgery on the DFT of the reflected
//! series: each grid gain multiplies bin `i` and its mirror `N - i`, so the
//! filtered reflection stays real and even. The DC bin always keeps gain 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{dft, inverse_dft, power_spectrum, reflect, reflected_index, Spectrum};
use crate::timeseries::LogSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Wiener,
    Cutoff,
}

/// Per-grid-point gains in `[0, 1]`, one per frequency `f_0..=f_{N/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub gains: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_index: Option<usize>,
}

/// Per-frequency ratio `signal / noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrProfile {
    pub ratio: Vec<f64>,
    /// Index 0 carries the level of the series, not a fluctuation; its
    /// ratio is reported but should not be read as a signal-to-noise figure.
    pub dc_dominated_by_level: bool,
}

/// `R(f_i) = signal_power[i] / noise_power[i]`.
pub fn snr(signal_power: &Spectrum, noise_power: &Spectrum) -> Result<SnrProfile> {
    signal_power.check_same_grid(noise_power)?;
    if let Some(i) = noise_power.power()[1..].iter().position(|p| !(*p > 0.0)) {
        return Err(Error::invalid(format!(
            "noise power must be positive off DC, zero at index {}",
            i + 1
        )));
    }
    let ratio = signal_power
        .power()
        .iter()
        .zip(noise_power.power())
        .map(|(s, n)| s / n)
        .collect();
    Ok(SnrProfile {
        ratio,
        dc_dominated_by_level: true,
    })
}

/// `|L|^2 = max(|P|^2 - S, 0)` elementwise.
pub fn estimate_signal_power(p: &Spectrum, s_hat: &Spectrum) -> Result<Spectrum> {
    p.check_same_grid(s_hat)?;
    let power = p
        .power()
        .iter()
        .zip(s_hat.power())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    Spectrum::from_power(p.analysis_len(), power)
}

/// `K = R / (1 + R) = signal / (signal + noise)`, gain 1 at DC.
pub fn wiener_gains(signal_power: &Spectrum, noise_power: &Spectrum) -> Result<FilterSpec> {
    signal_power.check_same_grid(noise_power)?;
    let gains = signal_power
        .power()
        .iter()
        .zip(noise_power.power())
        .enumerate()
        .map(|(i, (&s, &n))| {
            if i == 0 {
                1.0
            } else if s <= 0.0 {
                0.0
            } else if n <= 0.0 {
                1.0
            } else {
                s / (s + n)
            }
        })
        .collect();
    Ok(FilterSpec {
        kind: FilterKind::Wiener,
        gains,
        cutoff_index: None,
    })
}

/// Gain 1 below grid index `f_tilde`, 0 from it upward (DC always 1).
pub fn cutoff_gains(f_tilde: usize, grid_len: usize) -> Result<FilterSpec> {
    let nyquist = grid_len.saturating_sub(1);
    if f_tilde < 1 || f_tilde > nyquist + 1 {
        return Err(Error::invalid(format!(
            "cutoff index {f_tilde} outside 1..={}",
            nyquist + 1
        )));
    }
    let gains = (0..grid_len).map(|i| if i < f_tilde { 1.0 } else { 0.0 }).collect();
    Ok(FilterSpec {
        kind: FilterKind::Cutoff,
        gains,
        cutoff_index: Some(f_tilde),
    })
}

/// Applies grid gains to the reflected series and returns the samples at the
/// original times `t = 0..n-1`.
pub fn apply_filter(p: &LogSeries, spec: &FilterSpec) -> Result<LogSeries> {
    let r = reflect(p);
    let big_n = r.len();
    let grid_len = big_n / 2 + 1;
    if spec.gains.len() != grid_len {
        return Err(Error::GridMismatch {
            left: grid_len,
            right: spec.gains.len(),
        });
    }
    if spec.gains.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::invalid("filter gains must lie in [0, 1]"));
    }
    let mut coeffs = dft(r.values());
    for (i, c) in coeffs.iter_mut().enumerate() {
        let grid = if i <= big_n / 2 { i } else { big_n - i };
        *c *= spec.gains[grid];
    }
    let filtered = inverse_dft(coeffs);
    let n = p.len();
    LogSeries::new((0..n).map(|t| filtered[reflected_index(n, t)]).collect())
}

/// Wiener filter using `|P|^2 - S_hat` as the signal power.
pub fn wiener_filter(p: &LogSeries, s_hat: &Spectrum) -> Result<LogSeries> {
    let observed = power_spectrum(p);
    let signal = estimate_signal_power(&observed, s_hat)?;
    apply_filter(p, &wiener_gains(&signal, s_hat)?)
}

/// Result of [`find_cutoff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoff {
    pub index: usize,
    /// False when the estimated signal never dropped below the noise, in
    /// which case `index` is the Nyquist index.
    pub found: bool,
}

/// Smallest `i >= 1` where the estimated signal power falls below the noise,
/// i.e. `P[i] - S[i] < S[i]`.
pub fn find_cutoff(p: &Spectrum, s_hat: &Spectrum) -> Result<Cutoff> {
    let signal = estimate_signal_power(p, s_hat)?;
    let hit = (1..p.len()).find(|&i| signal.power()[i] < s_hat.power()[i]);
    Ok(match hit {
        Some(index) => Cutoff { index, found: true },
        None => Cutoff {
            index: p.nyquist_index(),
            found: false,
        },
    })
}

/// Keeps bins below `f_tilde`; `f_tilde = N/2 + 1` keeps everything.
pub fn cutoff_filter(p: &LogSeries, f_tilde: usize) -> Result<LogSeries> {
    let grid_len = (2 * (p.len() - 1)) / 2 + 1;
    apply_filter(p, &cutoff_gains(f_tilde, grid_len)?)
}
