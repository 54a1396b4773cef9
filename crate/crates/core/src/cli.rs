//! Command-line front end.
//!
//! Every verb accepts `--config FILE`, a JSON object whose keys are the long
//! flag names (`"tau"`, `"cutoff_index"`, `"A"`, ...). Flags given on the
//! command line override the file. `experiment` is the exception: its config
//! file is an experiment description and the flags override its fields.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad or unreadable data,
//! 3 degenerate input or an estimate with no finite value.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::denoise::{apply_filter, cutoff_gains, find_cutoff, wiener_gains, estimate_signal_power};
use crate::error::Error;
use crate::estimators::{
    mle_from_prices, pessimistic_sigma, wiener_noise_spectrum, BandScheme, NoiseEstimate,
};
use crate::experiments::{
    add, analyze_bubble, analyze_log_series, run_pessimistic_demo, run_tau_sweep, to_json,
    AnalysisOptions, ExperimentConfig, ExperimentKind, NoiseSource,
};
use crate::lppl::{lppl_series, normalized_power_law, LpplParams};
use crate::ou::{ou_simulate, InitialState, OuParams, Seed};
use crate::spectra::{amplitude_spectrum, Spectrum};
use crate::timeseries::{load_input, write_csv, write_series_csv, write_text, Input, LogSeries, PriceSeries};

#[derive(Debug, Parser)]
#[command(
    name = "bubble-spectra",
    version,
    about = "Spectral analysis of LPPL bubbles in Ornstein-Uhlenbeck noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an OU (or, without --tau, Wiener) path; writes series.csv.
    SimulateOu(SimulateOuArgs),
    /// Sample an LPPL trajectory, optionally plus OU noise; writes series.csv.
    SimulateLppl(SimulateLpplArgs),
    /// Amplitude and power spectrum of a series; writes spectrum.csv.
    Spectrum(SpectrumArgs),
    /// Estimate the noise parameters of a series.
    Estimate(EstimateArgs),
    /// Wiener or cutoff filtering; writes filtered.csv and filter.json.
    Denoise(DenoiseArgs),
    /// Run a scripted Monte Carlo study from a JSON config.
    Experiment(ExperimentArgs),
    /// Full analysis of a price file: spectrum, both estimators, cutoff filter.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Mle,
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FilterArg {
    Wiener,
    Cutoff,
}

impl From<MethodArg> for NoiseSource {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mle => NoiseSource::Mle,
            MethodArg::Pessimistic => NoiseSource::Pessimistic,
        }
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateOuArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// PRNG seed (required)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples
    #[arg(long)]
    n: Option<usize>,
    /// Relaxation time in steps; omitted or "inf" gives a Wiener process
    #[arg(long)]
    tau: Option<f64>,
    /// Diffusion constant
    #[arg(long)]
    sigma: Option<f64>,
    /// Start from this level instead of the stationary law
    #[arg(long)]
    init: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateLpplArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log-price level at the critical time
    #[arg(long = "A")]
    #[serde(rename = "A")]
    a: Option<f64>,
    /// Power-law scale
    #[arg(long = "B")]
    #[serde(rename = "B")]
    b: Option<f64>,
    /// Log-periodic amplitude (default 0)
    #[arg(long = "C")]
    #[serde(rename = "C")]
    c: Option<f64>,
    /// Power-law exponent
    #[arg(long)]
    m: Option<f64>,
    /// Log-periodic angular frequency (default 0)
    #[arg(long)]
    omega: Option<f64>,
    /// Phase (default 0)
    #[arg(long)]
    phi: Option<f64>,
    /// Critical time in steps
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    /// Number of samples (default floor(T) with --normalized)
    #[arg(long)]
    n: Option<usize>,
    /// Derive A and B so the path rises from 0 with unit integral
    #[arg(long)]
    normalized: bool,
    /// Add OU noise with this diffusion constant (requires --seed)
    #[arg(long)]
    sigma: Option<f64>,
    /// Relaxation time of the added noise; omitted means Wiener
    #[arg(long)]
    tau: Option<f64>,
    /// PRNG seed for the added noise
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpectrumArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Price CSV (date,close) or series CSV (t,value)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transform the raw series instead of its reflection (diagnostic only)
    #[arg(long)]
    unreflected: bool,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Price CSV (date,close) or series CSV (t,value)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory for estimate.json; prints to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimator (default pessimistic)
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Band growth factor of the pessimistic estimator (default 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Exit 0 even when the MLE has no finite value
    #[arg(long)]
    allow_nonfinite: bool,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DenoiseArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Price CSV (date,close) or series CSV (t,value)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Filter type (default cutoff when --cutoff-index is given, else wiener)
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    /// Noise model used to build the filter (default pessimistic)
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Band growth factor of the pessimistic estimator (default 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Keep grid bins below this index instead of searching for one
    #[arg(long)]
    cutoff_index: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
struct ExperimentArgs {
    /// Experiment description (JSON, required)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base PRNG seed (overrides seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Series length (overrides n and lppl.n)
    #[arg(long)]
    n: Option<usize>,
    /// Number of Monte Carlo replicates
    #[arg(long)]
    replicates: Option<usize>,
    /// Diffusion constant of the noise
    #[arg(long)]
    sigma: Option<f64>,
    /// Relaxation time of the noise (pessimistic demo only)
    #[arg(long)]
    tau: Option<f64>,
    /// Band growth factor of the pessimistic estimator
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalyzeArgs {
    /// JSON file with default values for these flags
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Price CSV (date,close) or series CSV (t,value)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Band growth factor of the pessimistic estimator (default 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Relative gap below which the two estimates count as close (default 0.25)
    #[arg(long)]
    closeness: Option<f64>,
    /// Noise model that places the cutoff (default mle, falling back to pessimistic)
    #[arg(long, value_enum)]
    cutoff_noise: Option<MethodArg>,
}

enum Failure {
    Usage(String),
    Lib(Error),
    NonFinite(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Fills unset fields of `$cli` from `$file`.
macro_rules! merge {
    ($cli:ident, $file:ident; $($opt:ident),* ; $($flag:ident),*) => {{
        $( if $cli.$opt.is_none() { $cli.$opt = $file.$opt; } )*
        $( $cli.$flag |= $file.$flag; )*
    }};
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("missing required value --{flag}")))
}

fn out_dir(out: Option<&PathBuf>) -> Result<&Path, Failure> {
    let dir = need(out, "out")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn log_resolved<T: Serialize>(command: &str, settings: &T) -> serde_json::Value {
    let v = serde_json::to_value(settings).unwrap_or_default();
    log::info!("{command}: {v}");
    v
}

fn noise_params(tau: Option<f64>, sigma: f64) -> Result<OuParams, Failure> {
    Ok(match tau {
        Some(t) => OuParams::new(t, sigma)?,
        None => OuParams::wiener(sigma)?,
    })
}

fn write_run(dir: &Path, command: &str, settings: serde_json::Value) -> Outcome {
    let body = json!({ "command": command, "settings": settings });
    write_text(&dir.join("run.json"), &to_json(&body)?)?;
    Ok(())
}

fn simulate_ou(mut a: SimulateOuArgs) -> Outcome {
    let f: SimulateOuArgs = read_config(a.config.as_deref())?;
    merge!(a, f; out, seed, n, tau, sigma, init; );
    let settings = log_resolved("simulate-ou", &a);
    let seed = need(a.seed, "seed")?;
    let n = need(a.n, "n")?;
    let params = noise_params(a.tau, need(a.sigma, "sigma")?)?;
    let init = a.init.map_or(InitialState::Stationary, InitialState::Fixed);
    let path = ou_simulate(&params, n, Seed(seed), init)?;
    let dir = out_dir(a.out.as_ref())?;
    write_series_csv(dir.join("series.csv"), &path)?;
    write_run(dir, "simulate-ou", settings)
}

fn simulate_lppl(mut a: SimulateLpplArgs) -> Outcome {
    let f: SimulateLpplArgs = read_config(a.config.as_deref())?;
    merge!(a, f; out, a, b, c, m, omega, phi, t, n, sigma, tau, seed; normalized);
    let settings = log_resolved("simulate-lppl", &a);
    let m = need(a.m, "m")?;
    let t_crit = need(a.t, "T")?;
    let mut params = if a.normalized {
        if a.a.is_some() || a.b.is_some() {
            return Err(usage("--normalized derives A and B; do not pass them"));
        }
        normalized_power_law(m, t_crit)?
    } else {
        LpplParams {
            a: need(a.a, "A")?,
            b: need(a.b, "B")?,
            c: 0.0,
            m,
            omega: 0.0,
            phi: 0.0,
            t_crit,
            n: need(a.n, "n")?,
        }
    };
    params.c = a.c.unwrap_or(0.0);
    params.omega = a.omega.unwrap_or(0.0);
    params.phi = a.phi.unwrap_or(0.0);
    if let Some(n) = a.n {
        params.n = n;
    }
    params.validate()?;
    let signal = lppl_series(&params)?;
    let dir = out_dir(a.out.as_ref())?;
    let series = match a.sigma {
        Some(sigma) => {
            let seed = need(a.seed, "seed")?;
            let nu = ou_simulate(&noise_params(a.tau, sigma)?, params.n, Seed(seed), InitialState::Stationary)?;
            write_series_csv(dir.join("signal.csv"), &signal)?;
            write_series_csv(dir.join("noise.csv"), &nu)?;
            add(&signal, &nu)?
        }
        None => signal,
    };
    write_series_csv(dir.join("series.csv"), &series)?;
    let body = json!({ "command": "simulate-lppl", "settings": settings, "lppl": params });
    write_text(&dir.join("run.json"), &to_json(&body)?)?;
    Ok(())
}

fn load(input: Option<&PathBuf>) -> Result<Input, Failure> {
    Ok(load_input(need(input, "input")?)?)
}

fn spectrum(mut a: SpectrumArgs) -> Outcome {
    let f: SpectrumArgs = read_config(a.config.as_deref())?;
    merge!(a, f; input, out; unreflected);
    let settings = log_resolved("spectrum", &a);
    let series = load(a.input.as_ref())?.log_series()?;
    let s = amplitude_spectrum(&series, !a.unreflected);
    let dir = out_dir(a.out.as_ref())?;
    s.write_csv(dir.join("spectrum.csv"))?;
    write_run(dir, "spectrum", settings)
}

fn estimate_with(method: MethodArg, alpha: f64, series: &LogSeries) -> Result<NoiseEstimate, Failure> {
    Ok(match method {
        MethodArg::Mle => mle_from_prices(series)?,
        MethodArg::Pessimistic => {
            let p = crate::spectra::power_spectrum(series);
            pessimistic_sigma(&p, &BandScheme::for_spectrum(alpha, &p)?)?
        }
    })
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    #[serde(flatten)]
    estimate: &'a NoiseEstimate,
    settings: serde_json::Value,
}

fn estimate(mut a: EstimateArgs) -> Outcome {
    let f: EstimateArgs = read_config(a.config.as_deref())?;
    merge!(a, f; input, out, method, alpha; allow_nonfinite);
    let method = *a.method.get_or_insert(MethodArg::Pessimistic);
    let alpha = *a.alpha.get_or_insert(1.0);
    let settings = log_resolved("estimate", &a);
    let series = load(a.input.as_ref())?.log_series()?;
    let est = estimate_with(method, alpha, &series)?;
    let text = to_json(&EstimateReport { estimate: &est, settings })?;
    match &a.out {
        Some(_) => {
            let dir = out_dir(a.out.as_ref())?;
            write_text(&dir.join("estimate.json"), &text)?;
        }
        None => print!("{text}"),
    }
    if !est.is_finite() && !a.allow_nonfinite {
        return Err(Failure::NonFinite(
            "likelihood has no finite maximizer (pass --allow-nonfinite to accept)".into(),
        ));
    }
    Ok(())
}

fn noise_spectrum_for(est: &NoiseEstimate, like: &Spectrum) -> Result<Spectrum, Failure> {
    if !est.is_finite() {
        return Err(Failure::NonFinite(
            "MLE has no finite noise spectrum; use --method pessimistic".into(),
        ));
    }
    Ok(est.noise_spectrum(like)?)
}

fn write_filtered(dir: &Path, input: &Input, filtered: &LogSeries) -> Outcome {
    let path = dir.join("filtered.csv");
    match input {
        Input::Prices(p) => {
            let closes = filtered.values().iter().map(|v| v.exp()).collect();
            write_csv(path, &PriceSeries::new(p.dates().to_vec(), closes)?)?;
        }
        Input::Series(_) => write_series_csv(path, filtered)?,
    }
    Ok(())
}

fn denoise(mut a: DenoiseArgs) -> Outcome {
    let f: DenoiseArgs = read_config(a.config.as_deref())?;
    merge!(a, f; input, out, filter, method, alpha, cutoff_index; );
    let filter = *a.filter.get_or_insert(if a.cutoff_index.is_some() {
        FilterArg::Cutoff
    } else {
        FilterArg::Wiener
    });
    if filter == FilterArg::Wiener && a.cutoff_index.is_some() {
        return Err(usage("--cutoff-index only applies to --filter cutoff"));
    }
    let method = *a.method.get_or_insert(MethodArg::Pessimistic);
    let alpha = *a.alpha.get_or_insert(1.0);
    let settings = log_resolved("denoise", &a);
    let input = load(a.input.as_ref())?;
    let series = input.log_series()?;
    let observed = crate::spectra::power_spectrum(&series);
    let est = estimate_with(method, alpha, &series)?;
    let spec = match (filter, a.cutoff_index) {
        (FilterArg::Cutoff, Some(i)) => cutoff_gains(i, observed.len())?,
        _ => {
            let noise = match method {
                MethodArg::Mle => noise_spectrum_for(&est, &observed)?,
                MethodArg::Pessimistic => {
                    wiener_noise_spectrum(est.sigma2_hat.expect("finite bound"), &observed)?
                }
            };
            match filter {
                FilterArg::Wiener => wiener_gains(&estimate_signal_power(&observed, &noise)?, &noise)?,
                FilterArg::Cutoff => {
                    let c = find_cutoff(&observed, &noise)?;
                    let keep = if c.found { c.index } else { observed.len() };
                    cutoff_gains(keep, observed.len())?
                }
            }
        }
    };
    let filtered = apply_filter(&series, &spec)?;
    let dir = out_dir(a.out.as_ref())?;
    write_filtered(dir, &input, &filtered)?;
    let body = json!({ "settings": settings, "noise": est, "filter": spec });
    write_text(&dir.join("filter.json"), &to_json(&body)?)?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Outcome {
    let path = need(a.config.as_ref(), "config")?;
    let mut cfg = ExperimentConfig::from_json_file(path)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n {
        cfg.n = Some(n);
        if let Some(l) = cfg.lppl.as_mut() {
            l.n = n;
        }
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if a.sigma.is_some() || a.tau.is_some() {
        let base = cfg.ou.unwrap_or(OuParams::wiener(0.0)?);
        let sigma = a.sigma.unwrap_or(base.sigma);
        cfg.ou = Some(match a.tau {
            Some(t) => OuParams::new(t, sigma)?,
            None => OuParams { sigma, ..base },
        });
    }
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    if cfg.output_dir.is_none() {
        return Err(usage("missing required value --out (or output_dir in the config)"));
    }
    log_resolved("experiment", &cfg);
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::TauSweep => {
            run_tau_sweep(&cfg)?;
        }
        ExperimentKind::PessimisticDemo => {
            run_pessimistic_demo(&cfg)?;
        }
    }
    let dir = cfg.output_dir.as_ref().expect("checked above");
    write_text(&dir.join("config.json"), &to_json(&cfg)?)?;
    Ok(())
}

fn analyze(mut a: AnalyzeArgs) -> Outcome {
    let f: AnalyzeArgs = read_config(a.config.as_deref())?;
    merge!(a, f; input, out, alpha, closeness, cutoff_noise; );
    log_resolved("analyze", &a);
    let defaults = AnalysisOptions::default();
    let options = AnalysisOptions {
        alpha: a.alpha.unwrap_or(defaults.alpha),
        closeness_threshold: a.closeness.unwrap_or(defaults.closeness_threshold),
        cutoff_noise: a.cutoff_noise.map_or(defaults.cutoff_noise, Into::into),
        output_dir: Some(out_dir(a.out.as_ref())?.to_path_buf()),
    };
    let report = match load(a.input.as_ref())? {
        Input::Prices(p) => analyze_bubble(&p, &options)?,
        Input::Series(s) => analyze_log_series(&s, &options)?,
    };
    log::info!(
        "cutoff index {} (found: {}), relative gap {:?}",
        report.cutoff.index,
        report.cutoff.found,
        report.flags.relative_gap
    );
    Ok(())
}

fn exit_code(failure: &Failure) -> i32 {
    match failure {
        Failure::Usage(_) => 1,
        Failure::Lib(e) if e.is_degenerate() => 3,
        Failure::Lib(_) => 2,
        Failure::NonFinite(_) => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::SimulateOu(a) => simulate_ou(a),
        Command::SimulateLppl(a) => simulate_lppl(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Estimate(a) => estimate(a),
        Command::Denoise(a) => denoise(a),
        Command::Experiment(a) => experiment(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) => {
                    use clap::CommandFactory;
                    eprintln!("error: {m}\n\n{}", Cli::command().render_usage());
                    eprintln!("For more information, try '<command> --help'.");
                }
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::NonFinite(m) => eprintln!("error: {m}"),
            }
            exit_code(&f)
        }
    }
}
