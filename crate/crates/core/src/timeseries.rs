//! Price ingestion, log transform and linear detrending.
//!
//! Time is the row index: calendar gaps (weekends, holidays) collapse to unit
//! steps, so a series of daily closes becomes `p(0), ..., p(n-1)`.
//!
//! Two CSV layouts are understood:
//!
//! * price files with header `date,close` (ISO `YYYY-MM-DD` dates),
//! * series files with header `t,value`, written by the simulators and
//!   holding values that are already log-prices (or noise levels).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily closing prices keyed by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series, checking that dates strictly increase and closes are positive.
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::invalid(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some((i, c)) = closes
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::invalid(format!(
                "close {c} at {} is not a positive number",
                dates[i]
            )));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// A uniformly sampled real sequence with at least two finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSeries {
    values: Vec<f64>,
}

impl LogSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "series needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at t = {i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First differences `x[t+1] - x[t]`, length `n - 1`.
    pub fn diffs(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Ordinary least-squares line `intercept + slope * t` over `t = 0..n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTrend {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearTrend {
    pub fn at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

/// Natural log of every close.
pub fn to_log_series(prices: &PriceSeries) -> Result<LogSeries> {
    LogSeries::new(prices.closes.iter().map(|c| c.ln()).collect())
}

/// Removes the OLS line from `x`, returning the residual and the fitted line.
pub fn linear_detrend(x: &LogSeries) -> (LogSeries, LinearTrend) {
    let v = x.values();
    let n = v.len() as f64;
    // centered abscissa keeps the normal equations well conditioned
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = x.mean();
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, &y) in v.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let trend = LinearTrend {
        intercept: y_mean - slope * t_mean,
        slope,
    };
    let residual = v
        .iter()
        .enumerate()
        .map(|(t, &y)| (y - y_mean) - slope * (t as f64 - t_mean))
        .collect();
    (LogSeries { values: residual }, trend)
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header_of(reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, what: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what} field"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {raw:?}"),
    })
}

/// Reads a `date,close` CSV. Rows may come in any order; they are sorted by
/// date and duplicate dates are rejected.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let header = header_of(&mut reader)?;
    if header != ["date", "close"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `date,close`, found `{}`", header.join(",")),
        });
    }
    let mut rows: Vec<(NaiveDate, f64, u64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let date: NaiveDate = parse_field(&rec, 0, "date")?;
        let close: f64 = parse_field(&rec, 1, "close")?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("close must be positive, got {close}"),
            });
        }
        rows.push((date, close, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse {
            line: w[0].2.max(w[1].2),
            msg: format!("duplicate date {}", w[0].0),
        });
    }
    let (dates, closes) = rows.into_iter().map(|(d, c, _)| (d, c)).unzip();
    PriceSeries::new(dates, closes)
}

/// Writes a `date,close` CSV that [`load_csv`] reads back unchanged.
pub fn write_csv(path: impl AsRef<Path>, prices: &PriceSeries) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(prices.len() * 24);
    out.push_str("date,close\n");
    for (d, c) in prices.dates.iter().zip(&prices.closes) {
        out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), c));
    }
    write_text(path, &out)
}

/// Writes a `t,value` CSV.
pub fn write_series_csv(path: impl AsRef<Path>, series: &LogSeries) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str("t,value\n");
    for (t, v) in series.values().iter().enumerate() {
        out.push_str(&format!("{t},{v}\n"));
    }
    write_text(path.as_ref(), &out)
}

/// Reads a `t,value` CSV; `t` must run 0, 1, 2, ...
pub fn load_series_csv(path: impl AsRef<Path>) -> Result<LogSeries> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let header = header_of(&mut reader)?;
    if header != ["t", "value"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `t,value`, found `{}`", header.join(",")),
        });
    }
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: usize = parse_field(&rec, 0, "t")?;
        if t != values.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected t = {}, found {t}", values.len()),
            });
        }
        values.push(parse_field::<f64>(&rec, 1, "value")?);
    }
    LogSeries::new(values)
}

/// What an input file turned out to contain.
#[derive(Debug, Clone)]
pub enum Input {
    Prices(PriceSeries),
    Series(LogSeries),
}

impl Input {
    /// The series to analyze: log-closes for price files, raw values otherwise.
    pub fn log_series(&self) -> Result<LogSeries> {
        match self {
            Input::Prices(p) => to_log_series(p),
            Input::Series(s) => Ok(s.clone()),
        }
    }
}

/// Loads either CSV layout, chosen by the header row.
pub fn load_input(path: impl AsRef<Path>) -> Result<Input> {
    let path = path.as_ref();
    let header = header_of(&mut open(path)?)?;
    match header.first().map(String::as_str) {
        Some("t") => Ok(Input::Series(load_series_csv(path)?)),
        _ => Ok(Input::Prices(load_csv(path)?)),
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "date,close\n2009-03-02,90.5\n2009-03-03,91\n2009-03-04,89.25\n",
        );
        let s = load_csv(&p).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.closes(), &[90.5, 91.0, 89.25]);
    }

    #[test]
    fn sorts_rows_by_date() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "date,close\n2009-03-03,2\n2009-03-02,1\n");
        let s = load_csv(&p).unwrap();
        assert_eq!(s.closes(), &[1.0, 2.0]);
    }

    #[test]
    fn negative_close_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "date,close\n2009-03-02,1\n2009-03-03,-1\n2009-03-04,2\n",
        );
        match load_csv(&p) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("positive"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "date,close\n2009-03-02,1\n03/03/2009,2\n");
        match load_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_date_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "date,close\n2009-03-02,1\n2009-03-02,2\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_header_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "day,price\n2009-03-02,1\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_csv(dir.path().join("nope.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn log_of_exact_powers() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..3).map(|i| d + chrono::Days::new(i)).collect();
        let e = std::f64::consts::E;
        let p = PriceSeries::new(dates, vec![1.0, e, e * e]).unwrap();
        let l = to_log_series(&p).unwrap();
        for (got, want) in l.values().iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_closes_give_constant_logs() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..5).map(|i| d + chrono::Days::new(i)).collect();
        let p = PriceSeries::new(dates, vec![7.5; 5]).unwrap();
        let l = to_log_series(&p).unwrap();
        assert!(l.values().iter().all(|&v| v == 7.5f64.ln()));
    }

    #[test]
    fn detrend_exact_line() {
        let x = LogSeries::new((0..50).map(|t| 3.0 + 0.5 * t as f64).collect()).unwrap();
        let (r, tr) = linear_detrend(&x);
        assert!((tr.slope - 0.5).abs() < 1e-12);
        assert!((tr.intercept - 3.0).abs() < 1e-12);
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn detrend_constant() {
        let x = LogSeries::new(vec![4.25; 10]).unwrap();
        let (r, tr) = linear_detrend(&x);
        assert_eq!(tr.slope, 0.0);
        assert_eq!(tr.intercept, 4.25);
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_series_rejected() {
        assert!(LogSeries::new(vec![1.0]).is_err());
        assert!(LogSeries::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = LogSeries::new(vec![0.1, -2.5e-7, 3.0]).unwrap();
        let p = dir.path().join("s.csv");
        write_series_csv(&p, &s).unwrap();
        assert_eq!(load_series_csv(&p).unwrap(), s);
        assert!(matches!(load_input(&p).unwrap(), Input::Series(_)));
    }
}
