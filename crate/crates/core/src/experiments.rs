//! Monte Carlo studies and the end-to-end price-series analysis.
//!
//! Replicate `r` of a study seeded with `s` always draws its noise from
//! `Seed(s).replicate(r)`, whatever thread runs it. Results are gathered in
//! replicate order before anything is written, so every output file is
//! byte-identical across runs.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{cutoff_filter, find_cutoff};
use crate::error::{Error, Result};
use crate::estimators::{
    mle_from_prices, pessimistic_sigma, wiener_noise_spectrum, BandScheme, NoiseEstimate,
};
use crate::lppl::{lppl_series, LpplParams};
use crate::ou::{ou_psd_discrete, ou_simulate, InitialState, OuParams, Seed};
use crate::spectra::{power_spectrum, Spectrum};
use crate::timeseries::{to_log_series, write_csv, write_text, LogSeries, PriceSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TauSweep,
    PessimisticDemo,
}

fn default_alpha() -> f64 {
    1.0
}

/// A scripted study, usually read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lppl: Option<LpplParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou: Option<OuParams>,
    /// Series length; defaults to `lppl.n` when an LPPL is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Relaxation times for a tau sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn series_len(&self) -> Result<usize> {
        self.n
            .or(self.lppl.map(|p| p.n))
            .ok_or_else(|| Error::invalid("experiment needs `n` or an `lppl.n`"))
    }

    fn ou_params(&self) -> Result<OuParams> {
        self.ou
            .ok_or_else(|| Error::invalid("experiment needs `ou` noise parameters"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::invalid("replicates must be >= 1"));
        }
        match self.kind {
            ExperimentKind::TauSweep => {
                if self.sweep.is_empty() {
                    return Err(Error::invalid("tau sweep needs a non-empty `sweep`"));
                }
                if let Some(t) = self.sweep.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                    return Err(Error::invalid(format!("sweep value {t} is not a valid tau")));
                }
                self.ou_params()?;
                if self.series_len()? < 4 {
                    return Err(Error::invalid("tau sweep needs n >= 4"));
                }
            }
            ExperimentKind::PessimisticDemo => {
                let lppl = self
                    .lppl
                    .ok_or_else(|| Error::invalid("pessimistic demo needs `lppl` parameters"))?;
                lppl.validate()?;
                self.ou_params()?;
                if self.series_len()? != lppl.n {
                    return Err(Error::invalid("`n` must match `lppl.n`"));
                }
                BandScheme::new(self.alpha, 1)?;
            }
        }
        Ok(())
    }

    fn prepare_output(&self) -> Result<Option<&Path>> {
        match &self.output_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Ok(Some(dir.as_path()))
            }
            None => Ok(None),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One row of a tau sweep: dispersion of the MLE over the replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweepRow {
    pub tau: f64,
    pub replicates: usize,
    pub nonfinite: usize,
    /// Quantiles over the finite estimates; `None` if there are none.
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

impl TauSweepRow {
    pub fn iqr(&self) -> Option<f64> {
        Some(self.q3? - self.q1?)
    }

    /// IQR divided by the true tau.
    pub fn relative_iqr(&self) -> Option<f64> {
        Some(self.iqr()? / self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweepTable {
    pub rows: Vec<TauSweepRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl TauSweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,replicates,nonfinite,median_tau_hat,q1,q3,iqr\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.tau,
                r.replicates,
                r.nonfinite,
                opt(r.median),
                opt(r.q1),
                opt(r.q3),
                opt(r.iqr())
            ));
        }
        out
    }
}

/// Pure OU noise at each tau of the sweep, estimated with [`mle_from_prices`].
pub fn run_tau_sweep(cfg: &ExperimentConfig) -> Result<TauSweepTable> {
    if cfg.kind != ExperimentKind::TauSweep {
        return Err(Error::invalid("config is not a tau sweep"));
    }
    cfg.validate()?;
    let sigma = cfg.ou_params()?.sigma;
    let n = cfg.series_len()?;
    let base = Seed(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.sweep.len());
    for &tau in &cfg.sweep {
        let params = OuParams::new(tau, sigma)?;
        let estimates = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let nu = ou_simulate(&params, n, base.replicate(r as u64), InitialState::Stationary)?;
                Ok(match mle_from_prices(&nu) {
                    Ok(est) => est.tau_hat.finite(),
                    Err(e) if e.is_degenerate() => None,
                    Err(e) => return Err(e),
                })
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        let mut finite: Vec<f64> = estimates.iter().flatten().copied().collect();
        finite.sort_by(f64::total_cmp);
        let q = |p| (!finite.is_empty()).then(|| quantile(&finite, p));
        rows.push(TauSweepRow {
            tau,
            replicates: cfg.replicates,
            nonfinite: cfg.replicates - finite.len(),
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
        });
    }
    let table = TauSweepTable { rows };
    if let Some(dir) = cfg.prepare_output()? {
        write_text(&dir.join("table.csv"), &table.to_csv())?;
        write_text(&dir.join("summary.json"), &to_json(&table)?)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PessimisticRow {
    pub replicate: usize,
    pub seed: u64,
    pub sigma2_hat: f64,
    pub binding_band: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PessimisticDemo {
    pub true_sigma2: f64,
    pub rows: Vec<PessimisticRow>,
    pub mean_sigma2_hat: f64,
}

impl PessimisticDemo {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,seed,sigma2_hat,band_h,band_k\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.replicate, r.seed, r.sigma2_hat, r.binding_band.0, r.binding_band.1
            ));
        }
        out
    }
}

/// Pessimistic estimation on `lppl + OU` replicates. Writes `table.csv`,
/// `summary.json` and, for replicate 0, `spectra.csv` with the amplitudes of
/// the clean signal, the noisy prices, the true noise and the estimate.
pub fn run_pessimistic_demo(cfg: &ExperimentConfig) -> Result<PessimisticDemo> {
    if cfg.kind != ExperimentKind::PessimisticDemo {
        return Err(Error::invalid("config is not a pessimistic demo"));
    }
    cfg.validate()?;
    let lppl = cfg.lppl.expect("validated");
    let noise = cfg.ou_params()?;
    let signal = lppl_series(&lppl)?;
    let base = Seed(cfg.seed);
    let runs = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = base.replicate(r as u64);
            let nu = ou_simulate(&noise, lppl.n, seed, InitialState::Stationary)?;
            let p = add(&signal, &nu)?;
            let spectrum = power_spectrum(&p);
            let est = pessimistic_sigma(&spectrum, &BandScheme::for_spectrum(cfg.alpha, &spectrum)?)?;
            let row = PessimisticRow {
                replicate: r,
                seed: seed.0,
                sigma2_hat: est.sigma2_hat.expect("pessimistic bound is finite"),
                binding_band: est.diagnostics.binding_band.expect("set by estimator"),
            };
            Ok((row, (r == 0).then_some(spectrum)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(runs.len());
    let mut first_spectrum = None;
    for (row, spec) in runs {
        rows.push(row);
        first_spectrum = first_spectrum.or(spec);
    }
    let mean_sigma2_hat = rows.iter().map(|r| r.sigma2_hat).sum::<f64>() / rows.len() as f64;
    let demo = PessimisticDemo {
        true_sigma2: noise.sigma * noise.sigma,
        rows,
        mean_sigma2_hat,
    };
    if let Some(dir) = cfg.prepare_output()? {
        let observed = first_spectrum.expect("at least one replicate");
        let clean = power_spectrum(&signal);
        let truth = Spectrum::from_psd(observed.analysis_len(), |f| ou_psd_discrete(&noise, f))?;
        let est = wiener_noise_spectrum(demo.rows[0].sigma2_hat, &observed)?;
        let mut csv = String::from(
            "freq,signal_amplitude,price_amplitude,noise_amplitude,pessimistic_amplitude\n",
        );
        for i in 0..observed.len() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                observed.freqs()[i],
                clean.amplitude()[i],
                observed.amplitude()[i],
                truth.amplitude()[i],
                est.amplitude()[i]
            ));
        }
        write_text(&dir.join("spectra.csv"), &csv)?;
        write_text(&dir.join("table.csv"), &demo.to_csv())?;
        write_text(&dir.join("summary.json"), &to_json(&demo)?)?;
    }
    Ok(demo)
}

pub(crate) fn add(a: &LogSeries, b: &LogSeries) -> Result<LogSeries> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    LogSeries::new(a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect())
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Noise model used to place the cutoff frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSource {
    /// Maximum-likelihood OU spectrum, falling back to the pessimistic one
    /// when the likelihood has no finite maximizer.
    Mle,
    Pessimistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Band growth factor of the pessimistic estimator.
    pub alpha: f64,
    /// Largest `|mle - pessimistic| / pessimistic` still called close.
    pub closeness_threshold: f64,
    pub cutoff_noise: NoiseSource,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            closeness_threshold: 0.25,
            cutoff_noise: NoiseSource::Mle,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_date: Option<NaiveDate>,
    pub first_log_price: f64,
    pub last_log_price: f64,
}

/// MLE result or the reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MleOutcome {
    Estimate(NoiseEstimate),
    Failed(String),
}

impl MleOutcome {
    pub fn estimate(&self) -> Option<&NoiseEstimate> {
        match self {
            MleOutcome::Estimate(e) => Some(e),
            MleOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub index: usize,
    pub freq: f64,
    /// False when no frequency had more noise than signal; nothing was cut.
    pub found: bool,
    pub noise_source: NoiseSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFiles {
    pub spectrum: String,
    pub noise: String,
    pub filtered: String,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub mle_finite: bool,
    pub zero_power_spectrum: bool,
    /// `|mle - pessimistic| / pessimistic`, when both are finite and positive.
    pub relative_gap: Option<f64>,
    pub estimates_close: Option<bool>,
    /// "weak" when the estimates are close: the data look like a Wiener process.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_reversion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub input: InputSummary,
    pub options: AnalysisOptions,
    pub mle: MleOutcome,
    pub pessimistic: NoiseEstimate,
    pub cutoff: CutoffReport,
    pub flags: ReportFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub files: Option<ReportFiles>,
}

/// Log transform, reflected spectrum, both noise estimators, cutoff search and
/// cutoff filtering. With an output directory, writes `spectrum.csv`,
/// `noise.csv`, `filtered.csv` and `report.json`.
pub fn analyze_bubble(prices: &PriceSeries, options: &AnalysisOptions) -> Result<AnalysisReport> {
    let log = to_log_series(prices)?;
    analyze(&log, Some(prices.dates()), options)
}

/// [`analyze_bubble`] on a series that is already in log space. Without dates,
/// `filtered.csv` uses the `t,value` layout.
pub fn analyze_log_series(log: &LogSeries, options: &AnalysisOptions) -> Result<AnalysisReport> {
    analyze(log, None, options)
}

fn analyze(
    log: &LogSeries,
    dates: Option<&[NaiveDate]>,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let n = log.len();
    if n < 32 {
        return Err(Error::invalid(format!("analysis needs n >= 32, got {n}")));
    }
    if !(options.closeness_threshold >= 0.0) {
        return Err(Error::invalid("closeness threshold must be >= 0"));
    }
    let spectrum = power_spectrum(log);
    let pessimistic = pessimistic_sigma(&spectrum, &BandScheme::for_spectrum(options.alpha, &spectrum)?)?;
    let sigma2_pess = pessimistic.sigma2_hat.expect("pessimistic bound is finite");
    let mle = match mle_from_prices(log) {
        Ok(est) => MleOutcome::Estimate(est),
        Err(e) if e.is_degenerate() => MleOutcome::Failed(e.to_string()),
        Err(e) => return Err(e),
    };
    let mle_noise = mle
        .estimate()
        .filter(|e| e.is_finite())
        .map(|e| e.noise_spectrum(&spectrum))
        .transpose()?;
    let pess_noise = wiener_noise_spectrum(sigma2_pess, &spectrum)?;
    let (noise, source) = match (options.cutoff_noise, &mle_noise) {
        (NoiseSource::Mle, Some(s)) => (s, NoiseSource::Mle),
        _ => (&pess_noise, NoiseSource::Pessimistic),
    };
    let cut = find_cutoff(&spectrum, noise)?;
    let keep = if cut.found { cut.index } else { spectrum.nyquist_index() + 1 };
    let filtered = cutoff_filter(log, keep)?;

    let sigma2_mle = mle.estimate().and_then(|e| e.sigma2_hat);
    let relative_gap = match sigma2_mle {
        Some(m) if sigma2_pess > 0.0 => Some((m - sigma2_pess).abs() / sigma2_pess),
        _ => None,
    };
    let estimates_close = relative_gap.map(|g| g <= options.closeness_threshold);
    let flags = ReportFlags {
        mle_finite: mle_noise.is_some(),
        zero_power_spectrum: spectrum.power()[1..].iter().all(|p| *p == 0.0),
        relative_gap,
        estimates_close,
        mean_reversion: (estimates_close == Some(true)).then(|| "weak".to_string()),
    };
    let v = log.values();
    let mut report = AnalysisReport {
        input: InputSummary {
            n,
            first_date: dates.and_then(|d| d.first().copied()),
            last_date: dates.and_then(|d| d.last().copied()),
            first_log_price: v[0],
            last_log_price: v[n - 1],
        },
        options: options.clone(),
        mle,
        pessimistic,
        cutoff: CutoffReport {
            index: cut.index,
            freq: spectrum.freqs()[cut.index],
            found: cut.found,
            noise_source: source,
        },
        flags,
        files: None,
    };

    if let Some(dir) = &options.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = ReportFiles {
            spectrum: "spectrum.csv".into(),
            noise: "noise.csv".into(),
            filtered: "filtered.csv".into(),
            report: "report.json".into(),
        };
        spectrum.write_csv(dir.join(&files.spectrum))?;
        let mut csv = String::from("freq,pessimistic_power,mle_power\n");
        for i in 0..spectrum.len() {
            csv.push_str(&format!(
                "{},{},{}\n",
                spectrum.freqs()[i],
                pess_noise.power()[i],
                opt(mle_noise.as_ref().map(|s| s.power()[i]))
            ));
        }
        write_text(&dir.join(&files.noise), &csv)?;
        match dates {
            Some(d) => {
                let closes = filtered.values().iter().map(|v| v.exp()).collect();
                write_csv(dir.join(&files.filtered), &PriceSeries::new(d.to_vec(), closes)?)?;
            }
            None => crate::timeseries::write_series_csv(dir.join(&files.filtered), &filtered)?,
        }
        report.files = Some(files.clone());
        write_text(&dir.join(&files.report), &to_json(&report)?)?;
    }
    Ok(report)
}
