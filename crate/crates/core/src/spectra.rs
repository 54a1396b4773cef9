//! Reflection and DFT spectra of finite series.
//!
//! A series `p(0..n)` is analyzed through its reflection
//! `p(n-1), ..., p(1), p(0), p(1), ..., p(n-2)`, periodic with period
//! `N = 2(n-1)`. The periodic extension is even, so its DFT is real and no
//! boundary step leaks into the spectrum.
//!
//! Amplitudes are normalized by `1/N` (a constant series has DC amplitude
//! equal to the constant) and `power = amplitude^2`. Multiplying `power` by
//! `N` gives the periodogram in the units of a power spectral density, which
//! is what [`Spectrum::periodogram`] returns and what the noise spectra of
//! [`crate::ou`] are compared against.

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::timeseries::{write_text, LogSeries};

/// One-sided spectrum on the grid `f_i = i / N`, `i = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freqs: Vec<f64>,
    amplitude: Vec<f64>,
    power: Vec<f64>,
    analysis_len: usize,
}

impl Spectrum {
    fn grid(analysis_len: usize) -> Vec<f64> {
        (0..=analysis_len / 2)
            .map(|i| i as f64 / analysis_len as f64)
            .collect()
    }

    /// Builds a spectrum from per-bin power on the grid of an `analysis_len`
    /// transform.
    pub fn from_power(analysis_len: usize, power: Vec<f64>) -> Result<Self> {
        if analysis_len < 2 {
            return Err(Error::invalid("analysis length must be >= 2"));
        }
        let freqs = Self::grid(analysis_len);
        if power.len() != freqs.len() {
            return Err(Error::GridMismatch {
                left: freqs.len(),
                right: power.len(),
            });
        }
        if power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("power must be non-negative"));
        }
        let amplitude = power.iter().map(|p| p.sqrt()).collect();
        Ok(Self {
            freqs,
            amplitude,
            power,
            analysis_len,
        })
    }

    /// Spectrum whose periodogram equals `psd(f_i)` at every grid point.
    /// Used to place a theoretical noise spectrum on the grid of an observed one.
    pub fn from_psd(analysis_len: usize, psd: impl Fn(f64) -> f64) -> Result<Self> {
        let scale = analysis_len as f64;
        let power = Self::grid(analysis_len)
            .into_iter()
            .map(|f| psd(f) / scale)
            .collect();
        Self::from_power(analysis_len, power)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    /// `N`, the length of the transformed sequence.
    pub fn analysis_len(&self) -> usize {
        self.analysis_len
    }

    /// Number of grid points, `N/2 + 1`.
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Highest grid index, `N/2`.
    pub fn nyquist_index(&self) -> usize {
        self.freqs.len() - 1
    }

    /// `N * power`, directly comparable to a power spectral density.
    pub fn periodogram(&self) -> Vec<f64> {
        let scale = self.analysis_len as f64;
        self.power.iter().map(|p| p * scale).collect()
    }

    /// Same spectrum with every power value multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("scale must be > 0, got {c}")));
        }
        Self::from_power(self.analysis_len, self.power.iter().map(|p| p * c).collect())
    }

    pub fn check_same_grid(&self, other: &Spectrum) -> Result<()> {
        if self.analysis_len != other.analysis_len {
            return Err(Error::GridMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    /// `freq,amplitude,power` CSV, one row per grid point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::with_capacity(self.len() * 64);
        out.push_str("freq,amplitude,power\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.freqs[i], self.amplitude[i], self.power[i]
            ));
        }
        write_text(path.as_ref(), &out)
    }
}

/// Even-symmetric periodization: `(a, b, c) -> (c, b, a, b)`.
pub fn reflect(x: &LogSeries) -> LogSeries {
    let v = x.values();
    let n = v.len();
    let mut out = Vec::with_capacity(2 * (n - 1));
    out.extend(v.iter().rev());
    out.extend_from_slice(&v[1..n - 1]);
    LogSeries::new(out).expect("reflection of a valid series is valid")
}

/// Position of original time `t` inside the reflected sequence.
pub(crate) fn reflected_index(n: usize, t: usize) -> usize {
    (n - 1 + t) % (2 * (n - 1))
}

/// Unnormalized forward DFT `X_k = sum_t x[t] exp(-2 pi i k t / N)`.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse of [`dft`], including the `1/N` factor; returns real parts.
pub fn inverse_dft(mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let n = coeffs.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut coeffs);
    coeffs.into_iter().map(|c| c.re / n as f64).collect()
}

/// Amplitude spectrum of `x`, or of its reflection when `reflected` is set.
/// Unreflected spectra are meant for diagnostics only.
pub fn amplitude_spectrum(x: &LogSeries, reflected: bool) -> Spectrum {
    let seq = if reflected { reflect(x) } else { x.clone() };
    let n = seq.len();
    // Transform the offsets from the first sample and restore the level in
    // the DC bin: constant series then have exactly zero power off DC.
    let origin = seq.values()[0];
    let centered: Vec<f64> = seq.values().iter().map(|v| v - origin).collect();
    let mut coeffs = dft(&centered);
    coeffs[0].re += n as f64 * origin;
    let scale = n as f64;
    let amplitude: Vec<f64> = coeffs[..=n / 2].iter().map(|c| c.norm() / scale).collect();
    let power = amplitude.iter().map(|a| a * a).collect();
    Spectrum {
        freqs: Spectrum::grid(n),
        amplitude,
        power,
        analysis_len: n,
    }
}

/// Power spectrum of the reflected series; the `|P|^2` used by estimation
/// and de-noising.
pub fn power_spectrum(x: &LogSeries) -> Spectrum {
    amplitude_spectrum(x, true)
}
