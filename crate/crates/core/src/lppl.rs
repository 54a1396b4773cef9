//! Log-periodic power law trajectories.
//!
//! `l(t) = A - B (T - t)^m (1 + C cos(omega ln(T - t) + phi))`, defined for
//! `t < T`. The oscillating term is a frequency-modulated carrier whose
//! instantaneous frequency `omega / (2 pi (T - t))` sweeps the band returned by
//! [`fm_band`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::LogSeries;

/// The seven LPPL constants plus the sampling horizon `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplParams {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub m: f64,
    pub omega: f64,
    pub phi: f64,
    /// Critical time, in time steps.
    #[serde(rename = "T")]
    pub t_crit: f64,
    pub n: usize,
}

impl LpplParams {
    /// Checks the parameter ranges. `m = 0` is accepted (pure log-periodicity).
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.m, self.omega, self.phi, self.t_crit]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("LPPL parameters must be finite"));
        }
        if self.b < 0.0 {
            return Err(Error::invalid(format!("B must be >= 0, got {}", self.b)));
        }
        if !(0.0..=1.0).contains(&self.m) {
            return Err(Error::invalid(format!("m must lie in [0, 1], got {}", self.m)));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be >= 2, got {}", self.n)));
        }
        Ok(())
    }

    /// `m = 0`: no power law, only the log-periodic oscillation.
    pub fn is_pure_log_periodic(&self) -> bool {
        self.m == 0.0
    }

    /// Phase `omega ln(T - t) + phi` of the oscillating term.
    pub fn phase(&self, t: f64) -> f64 {
        self.omega * (self.t_crit - t).ln() + self.phi
    }
}

fn check_before_critical(p: &LpplParams, t: f64) -> Result<()> {
    if !(t < p.t_crit) {
        return Err(Error::invalid(format!(
            "t = {t} is not before the critical time T = {}",
            p.t_crit
        )));
    }
    Ok(())
}

/// Evaluates the LPPL at time `t < T`.
pub fn lppl_eval(p: &LpplParams, t: f64) -> Result<f64> {
    check_before_critical(p, t)?;
    let dt = p.t_crit - t;
    Ok(p.a - p.b * dt.powf(p.m) * (1.0 + p.c * (p.omega * dt.ln() + p.phi).cos()))
}

/// Samples the LPPL at `t = 0..n-1`.
pub fn lppl_series(p: &LpplParams) -> Result<LogSeries> {
    p.validate()?;
    check_before_critical(p, (p.n - 1) as f64)?;
    let values = (0..p.n)
        .map(|t| lppl_eval(p, t as f64))
        .collect::<Result<Vec<_>>>()?;
    LogSeries::new(values)
}

/// `(T - t)^m cos(omega ln(T - t) + phi)` at `t = 0..n-1`: the oscillating
/// term with its amplitude modulation but without the power-law trend.
pub fn oscillatory_component(p: &LpplParams) -> Result<LogSeries> {
    p.validate()?;
    check_before_critical(p, (p.n - 1) as f64)?;
    let values = (0..p.n)
        .map(|t| {
            let dt = p.t_crit - t as f64;
            dt.powf(p.m) * (p.omega * dt.ln() + p.phi).cos()
        })
        .collect();
    LogSeries::new(values)
}

/// Power law with `C = 0` normalized so that `l(0) = 0` and the integral of
/// `l` over `[0, T]` is 1/2. The horizon is `n = floor(T)`.
pub fn normalized_power_law(m: f64, t_crit: f64) -> Result<LpplParams> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::invalid(format!(
            "normalized power law needs 0 < m <= 1, got {m}"
        )));
    }
    if !(t_crit.is_finite() && t_crit >= 2.0) {
        return Err(Error::invalid(format!("critical time must be >= 2, got {t_crit}")));
    }
    let a_hat = (1.0 + 1.0 / m) / (2.0 * t_crit);
    let b_hat = a_hat / t_crit.powf(m);
    // re-derive A from B so that l(0) = A - B T^m cancels exactly
    let a = b_hat * t_crit.powf(m);
    debug_assert!((a - a_hat).abs() <= 4.0 * f64::EPSILON * a_hat);
    Ok(LpplParams {
        a,
        b: b_hat,
        c: 0.0,
        m,
        omega: 0.0,
        phi: 0.0,
        t_crit,
        n: t_crit.floor() as usize,
    })
}

/// Frequency band swept by the log-periodic oscillation over `t in [0, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmBand {
    /// `omega / (2 pi T)`, cycles per step.
    pub f_min: f64,
    /// `omega / (2 pi (T - n))`, capped at Nyquist.
    pub f_max: f64,
    /// Set when the upper edge exceeded 1/2 and was capped.
    pub clipped: bool,
}

impl FmBand {
    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_min && f <= self.f_max
    }
}

/// The band `[omega / (2 pi T), omega / (2 pi (T - n))]`.
pub fn fm_band(p: &LpplParams) -> Result<FmBand> {
    if !(p.omega > 0.0 && p.omega.is_finite()) {
        return Err(Error::invalid(format!("omega must be > 0, got {}", p.omega)));
    }
    let n = p.n as f64;
    if !(p.t_crit > n) {
        return Err(Error::invalid(format!(
            "critical time T = {} must exceed the horizon n = {n}",
            p.t_crit
        )));
    }
    let f_min = p.omega / (2.0 * PI * p.t_crit);
    let raw_max = p.omega / (2.0 * PI * (p.t_crit - n));
    if f_min >= 0.5 {
        return Err(Error::invalid(format!(
            "band starts above Nyquist (f_min = {f_min})"
        )));
    }
    let clipped = raw_max > 0.5;
    if clipped {
        log::warn!("log-periodic band edge {raw_max} exceeds Nyquist, capped at 0.5");
    }
    Ok(FmBand {
        f_min,
        f_max: raw_max.min(0.5),
        clipped,
    })
}
