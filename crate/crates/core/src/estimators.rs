//! Ornstein-Uhlenbeck noise estimation.
//!
//! Two estimators are provided:
//!
//! * **Maximum likelihood** in the time domain. Observed prices only reveal
//!   the noise through first differences, so the level `nu(0)` is recovered
//!   from the zero-drift identity `S_x S_xy = S_y S_xx` before the AR(1)
//!   likelihood is maximized.
//! * **Pessimistic** in the frequency domain. The noise is assumed to be a
//!   Wiener process and `sigma^2` is the largest value whose spectrum stays
//!   below the observed power on every band of a geometric band scheme.
//!
//! A relaxation time that cannot be estimated is a regular outcome
//! ([`TauHat::NonFinite`]), not an error.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ou::{ou_psd_discrete, ou_psd_wiener_limit, OuParams};
use crate::spectra::Spectrum;
use crate::timeseries::{linear_detrend, LinearTrend, LogSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mle,
    Pessimistic,
}

/// Estimated relaxation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauHat {
    Finite(f64),
    /// Assumed infinite (Wiener limit).
    Infinite,
    /// The data did not yield a finite estimate.
    NonFinite,
}

impl TauHat {
    pub fn finite(self) -> Option<f64> {
        match self {
            TauHat::Finite(t) => Some(t),
            _ => None,
        }
    }
}

impl Serialize for TauHat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauHat::Finite(t) => s.serialize_f64(*t),
            TauHat::Infinite => s.serialize_str("infinite"),
            TauHat::NonFinite => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for TauHat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(TauHat::Finite(t)),
            Raw::Text(s) if s == "infinite" => Ok(TauHat::Infinite),
            Raw::Text(s) if s == "none" => Ok(TauHat::NonFinite),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("bad tau_hat {s:?}"))),
        }
    }
}

/// Sums over `i = 1..n-1` of the lagged level products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSums {
    pub s_x: f64,
    pub s_y: f64,
    pub s_xx: f64,
    pub s_xy: f64,
    pub s_yy: f64,
}

impl LevelSums {
    pub fn from_levels(nu: &[f64]) -> Self {
        let mut s = LevelSums {
            s_x: 0.0,
            s_y: 0.0,
            s_xx: 0.0,
            s_xy: 0.0,
            s_yy: 0.0,
        };
        for w in nu.windows(2) {
            let (x, y) = (w[0], w[1]);
            s.s_x += x;
            s.s_y += y;
            s.s_xx += x * x;
            s.s_xy += x * y;
            s.s_yy += y * y;
        }
        s
    }
}

/// Sums of the cumulative differences `alpha_t = nu(t) - nu(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSums {
    pub a_x: f64,
    pub a_y: f64,
    pub a_xy: f64,
    /// `sum alpha_{i-1}^2`.
    pub a_xx: f64,
}

/// `alpha_0 = 0, alpha_t = sum_{i<t} diffs[i]`.
pub fn cumulative_alpha(diffs: &[f64]) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(diffs.len() + 1);
    let mut acc = 0.0;
    alpha.push(acc);
    for d in diffs {
        acc += d;
        alpha.push(acc);
    }
    alpha
}

pub fn alpha_sums(alpha: &[f64]) -> AlphaSums {
    let mut s = AlphaSums {
        a_x: 0.0,
        a_y: 0.0,
        a_xy: 0.0,
        a_xx: 0.0,
    };
    for w in alpha.windows(2) {
        s.a_x += w[0];
        s.a_y += w[1];
        s.a_xy += w[0] * w[1];
        s.a_xx += w[0] * w[0];
    }
    s
}

/// Extra information attached to an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub detrended: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend: Option<LinearTrend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sums: Option<LevelSums>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands_used: Option<usize>,
    /// Grid indices `(h, k)` of the band that set the pessimistic bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binding_band: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub method: Method,
    pub tau_hat: TauHat,
    /// `None` when the likelihood has no finite maximizer.
    pub sigma2_hat: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl NoiseEstimate {
    pub fn is_finite(&self) -> bool {
        self.sigma2_hat.is_some() && !matches!(self.tau_hat, TauHat::NonFinite)
    }

    /// Noise parameters implied by the estimate, if any.
    pub fn ou_params(&self) -> Option<OuParams> {
        let sigma = self.sigma2_hat?.sqrt();
        match self.tau_hat {
            TauHat::Finite(t) => OuParams::new(t, sigma).ok(),
            TauHat::Infinite => OuParams::wiener(sigma).ok(),
            TauHat::NonFinite => None,
        }
    }

    /// The estimated noise spectrum on the grid of `like`.
    pub fn noise_spectrum(&self, like: &Spectrum) -> Result<Spectrum> {
        let p = self
            .ou_params()
            .ok_or_else(|| Error::Degenerate("estimate has no finite noise spectrum".into()))?;
        Spectrum::from_psd(like.analysis_len(), |f| ou_psd_discrete(&p, f))
    }
}

/// AR(1) maximum likelihood on observed levels `nu(0..n)`.
///
/// `a = S_xy / S_xx`, `tau = 1 / ln(S_xx / S_xy)` and
/// `sigma^2 = 2 / (tau (1 - a^2)) * (S_yy - 2 a S_xy + a^2 S_xx) / (n - 1)`,
/// the last being the residual variance divided by the one-step innovation
/// factor `tau (1 - a^2) / 2`.
pub fn mle_from_levels(nu: &LogSeries) -> Result<NoiseEstimate> {
    let v = nu.values();
    if v.len() < 3 {
        return Err(Error::invalid(format!("MLE needs n >= 3, got {}", v.len())));
    }
    let sums = LevelSums::from_levels(v);
    let mut diagnostics = Diagnostics {
        sums: Some(sums),
        ..Diagnostics::default()
    };
    if !(sums.s_xy > 0.0 && sums.s_xy < sums.s_xx) {
        diagnostics.note = Some(format!(
            "S_xy / S_xx = {} outside (0, 1): no finite estimate",
            sums.s_xy / sums.s_xx
        ));
        return Ok(NoiseEstimate {
            method: Method::Mle,
            tau_hat: TauHat::NonFinite,
            sigma2_hat: None,
            diagnostics,
        });
    }
    let a = sums.s_xy / sums.s_xx;
    let rate = (sums.s_xx / sums.s_xy).ln();
    let tau = 1.0 / rate;
    let m = (v.len() - 1) as f64;
    let resid = (sums.s_yy - 2.0 * a * sums.s_xy + a * a * sums.s_xx).max(0.0) / m;
    let sigma2 = 2.0 * rate / (1.0 - a * a) * resid;
    diagnostics.a_hat = Some(a);
    Ok(NoiseEstimate {
        method: Method::Mle,
        tau_hat: TauHat::Finite(tau),
        sigma2_hat: Some(sigma2),
        diagnostics,
    })
}

/// Recovers `nu(0)` from the first differences of an OU path.
pub fn reconstruct_nu0(diffs: &[f64]) -> Result<f64> {
    if diffs.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 differences (n >= 3), got {}",
            diffs.len()
        )));
    }
    let alpha = cumulative_alpha(diffs);
    let s = alpha_sums(&alpha);
    let m = diffs.len() as f64;
    let num = s.a_y * s.a_xx - s.a_x * s.a_xy;
    let den = m * s.a_xy - m * s.a_xx + s.a_x * s.a_x - s.a_y * s.a_x;
    let scale = m * (s.a_xy.abs() + s.a_xx.abs()) + s.a_x * s.a_x + (s.a_y * s.a_x).abs();
    if !(den.abs() >= 1e-12 * scale) || scale == 0.0 {
        return Err(Error::Degenerate(format!(
            "nu(0) denominator {den:e} vanishes (scale {scale:e})"
        )));
    }
    Ok(num / den)
}

/// Detrend, difference, rebuild levels, then [`mle_from_levels`].
pub fn mle_from_prices(p: &LogSeries) -> Result<NoiseEstimate> {
    let v = p.values();
    if v.len() < 4 {
        return Err(Error::invalid(format!("need n >= 4 prices, got {}", v.len())));
    }
    let (resid, trend) = linear_detrend(p);
    let level_scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let resid_scale = resid.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if resid_scale <= 1e-12 * level_scale {
        return Err(Error::Degenerate(
            "prices are a straight line; no noise left after detrending".into(),
        ));
    }
    let diffs = resid.diffs();
    let nu0 = reconstruct_nu0(&diffs)?;
    let levels: Vec<f64> = cumulative_alpha(&diffs).into_iter().map(|a| nu0 + a).collect();
    let mut est = mle_from_levels(&LogSeries::new(levels)?)?;
    est.diagnostics.detrended = true;
    est.diagnostics.trend = Some(trend);
    est.diagnostics.nu0 = Some(nu0);
    Ok(est)
}

/// Contiguous frequency bands `[h_j, k_j]` with `h_0 = 1` and
/// `k_j = h_{j+1} = ceil((1 + alpha) h_j)`, at least `h_j + 1`, capped at `N/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScheme {
    pub alpha: f64,
    pub bands: Vec<(usize, usize)>,
}

impl BandScheme {
    /// Bands covering grid indices `1..=nyquist_index`.
    pub fn new(alpha: f64, nyquist_index: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("band growth alpha must be > 0, got {alpha}")));
        }
        if nyquist_index < 1 {
            return Err(Error::invalid("no positive frequencies to band"));
        }
        let mut bands = Vec::new();
        let mut h = 1usize;
        loop {
            let grown = ((1.0 + alpha) * h as f64).ceil() as usize;
            let k = grown.max(h + 1).min(nyquist_index);
            bands.push((h, k));
            if k >= nyquist_index {
                break;
            }
            h = k;
        }
        Ok(Self { alpha, bands })
    }

    pub fn for_spectrum(alpha: f64, spectrum: &Spectrum) -> Result<Self> {
        Self::new(alpha, spectrum.nyquist_index())
    }
}

/// `2 sum P(f_i) / sum 1/(1 - cos 2 pi f_i)` over one band, both sums taken
/// from the highest frequency down.
pub fn band_bound(periodogram: &[f64], freqs: &[f64], band: (usize, usize)) -> f64 {
    let (h, k) = band;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (h..=k).rev() {
        num += periodogram[i];
        // 1 / (1 - cos 2 pi f) = 1 / (2 sin^2 pi f)
        let s = (std::f64::consts::PI * freqs[i]).sin();
        den += 1.0 / (2.0 * s * s);
    }
    2.0 * num / den
}

/// Largest Wiener-noise `sigma^2` consistent with the observed power on every band.
pub fn pessimistic_sigma(p: &Spectrum, scheme: &BandScheme) -> Result<NoiseEstimate> {
    if scheme.bands.is_empty() {
        return Err(Error::invalid("empty band scheme"));
    }
    if let Some(&(h, k)) = scheme
        .bands
        .iter()
        .find(|(h, k)| *h == 0 || h > k || *k > p.nyquist_index())
    {
        return Err(Error::invalid(format!(
            "band ({h}, {k}) outside grid 1..={}",
            p.nyquist_index()
        )));
    }
    let pg = p.periodogram();
    let (band, bound) = scheme
        .bands
        .iter()
        .map(|&b| (b, band_bound(&pg, p.freqs(), b)))
        .fold(None, |best: Option<((usize, usize), f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .expect("non-empty scheme");
    Ok(NoiseEstimate {
        method: Method::Pessimistic,
        tau_hat: TauHat::Infinite,
        sigma2_hat: Some(bound),
        diagnostics: Diagnostics {
            bands_used: Some(scheme.bands.len()),
            binding_band: Some(band),
            ..Diagnostics::default()
        },
    })
}

/// `S_inf(f)` for the given `sigma^2` on the grid of `like`.
pub fn wiener_noise_spectrum(sigma2: f64, like: &Spectrum) -> Result<Spectrum> {
    Spectrum::from_psd(like.analysis_len(), |f| ou_psd_wiener_limit(sigma2, f))
}
