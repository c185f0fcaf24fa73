//! Fitting model parameters from historical loss records.
//!
//! The pipeline covers severity fitting by maximum likelihood across six
//! candidate families with goodness-of-fit statistics, homogeneous
//! Poisson intensity estimation by least squares on the cumulative event
//! count, beta fitting of observed regional loss proportions, derivation
//! of equity impact coefficients from a loss-effect parameter, and CSV
//! ingestion with optional price-index adjustment.
//!
//! Heavy-tailed families (Pareto, generalized extreme value) and the
//! inverse Gaussian are fit for comparison only: pricing requires a
//! severity with a finite Laplace transform on the whole positive axis,
//! so only the lognormal, gamma, and Weibull fits carry a pricing-ready
//! severity.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::distributions::{standard_normal_cdf, Severity};
use crate::error::{invalid, io_error, parse_error, tolerance, Result};
use crate::loss_models::{Impact, LossModel, Proportion};

/// Calendar date, parsed from and formatted as ISO-8601 (YYYY-MM-DD).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Date> {
        let d = Date { year, month, day };
        if !d.is_valid() {
            return Err(parse_error(format!("invalid calendar date {year:04}-{month:02}-{day:02}")));
        }
        Ok(d)
    }

    fn is_valid(&self) -> bool {
        if self.month < 1 || self.month > 12 || self.day < 1 {
            return false;
        }
        self.day <= days_in_month(self.year, self.month)
    }

    /// Days since 1970-01-01, by the standard civil-calendar algorithm.
    pub fn days_from_epoch(&self) -> i64 {
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let mp = (i64::from(self.month) + 9) % 12;
        let doy = (153 * mp + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    /// Inverse of [`Date::days_from_epoch`].
    pub fn from_days(days: i64) -> Date {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let month = ((mp + 2) % 12 + 1) as u8;
        let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
        Date { year, month, day }
    }

    /// Fractional years from `earlier` to `self` (365.25-day years).
    pub fn years_since(&self, earlier: Date) -> f64 {
        (self.days_from_epoch() - earlier.days_from_epoch()) as f64 / 365.25
    }
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
            if leap {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for Date {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Date> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 || parts[0].len() != 4 || parts[1].len() != 2 || parts[2].len() != 2 {
            return Err(parse_error(format!("expected YYYY-MM-DD, got {s:?}")));
        }
        let year: i32 = parts[0].parse().map_err(|_| parse_error(format!("bad year in {s:?}")))?;
        let month: u8 = parts[1].parse().map_err(|_| parse_error(format!("bad month in {s:?}")))?;
        let day: u8 = parts[2].parse().map_err(|_| parse_error(format!("bad day in {s:?}")))?;
        Date::new(year, month, day)
    }
}

/// One catastrophe event with its per-region losses (billions, already
/// inflation-adjusted unless [`adjust_cpi`] is applied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEvent {
    pub date: Date,
    pub loss1: f64,
    pub loss2: f64,
}

/// An ordered record of loss events over an observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDataset {
    pub events: Vec<LossEvent>,
    pub start: Date,
    pub end: Date,
}

impl LossDataset {
    pub fn new(events: Vec<LossEvent>, start: Date, end: Date) -> Result<LossDataset> {
        if events.is_empty() {
            return Err(invalid("a loss dataset needs at least one event"));
        }
        if end <= start {
            return Err(invalid(format!("window end {end} is not after start {start}")));
        }
        for pair in events.windows(2) {
            if pair[1].date < pair[0].date {
                return Err(invalid(format!(
                    "event dates must be nondecreasing; {} follows {}",
                    pair[1].date, pair[0].date
                )));
            }
        }
        for e in &events {
            if e.date < start || e.date > end {
                return Err(invalid(format!("event on {} falls outside the window", e.date)));
            }
            if !(e.loss1.is_finite() && e.loss1 >= 0.0 && e.loss2.is_finite() && e.loss2 >= 0.0) {
                return Err(invalid(format!(
                    "losses must be finite and nonnegative, got {} / {} on {}",
                    e.loss1, e.loss2, e.date
                )));
            }
        }
        Ok(LossDataset { events, start, end })
    }

    pub fn window_years(&self) -> f64 {
        self.end.years_since(self.start)
    }

    /// Event times in years from the window start.
    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.date.years_since(self.start)).collect()
    }

    pub fn region1_losses(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.loss1).collect()
    }

    pub fn region2_losses(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.loss2).collect()
    }

    pub fn total_losses(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.loss1 + e.loss2).collect()
    }
}

/// Reads a loss dataset from CSV with header `date,loss_region1,
/// loss_region2`. The observation window is the span of the event dates.
pub fn load_losses(path: &Path) -> Result<LossDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_error(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| parse_error(format!("{} is empty", path.display())))?
        .1
        .trim();
    if header != "date,loss_region1,loss_region2" {
        return Err(parse_error(format!(
            "line 1: expected header 'date,loss_region1,loss_region2', got {header:?}"
        )));
    }
    let mut events = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_error(format!("line {}: expected 3 fields, got {}", idx + 1, fields.len())));
        }
        let date: Date = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_error(format!("line {}: {e}", idx + 1)))?;
        let loss1: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_error(format!("line {}: bad loss_region1 {:?}", idx + 1, fields[1])))?;
        let loss2: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(format!("line {}: bad loss_region2 {:?}", idx + 1, fields[2])))?;
        events.push(LossEvent { date, loss1, loss2 });
    }
    if events.is_empty() {
        return Err(parse_error(format!("{} contains no events", path.display())));
    }
    let start = events.first().expect("non-empty").date;
    let end = events.last().expect("non-empty").date;
    let end = if end > start { end } else { Date::from_days(start.days_from_epoch() + 1) };
    LossDataset::new(events, start, end)
}

/// Writes a dataset to CSV in the format [`load_losses`] reads. Losses
/// are written with full round-trip precision.
pub fn save_losses(dataset: &LossDataset, path: &Path) -> Result<()> {
    let mut out = String::from("date,loss_region1,loss_region2\n");
    for e in &dataset.events {
        out.push_str(&format!("{},{},{}\n", e.date, e.loss1, e.loss2));
    }
    std::fs::write(path, out).map_err(|e| io_error(format!("cannot write {}: {e}", path.display())))
}

/// A price index sampled at dates, treated as a right-continuous step
/// function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    points: Vec<(Date, f64)>,
}

impl IndexSeries {
    pub fn new(mut points: Vec<(Date, f64)>) -> Result<IndexSeries> {
        if points.is_empty() {
            return Err(invalid("an index series needs at least one point"));
        }
        points.sort_by_key(|&(d, _)| d.days_from_epoch());
        for &(d, v) in &points {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("index value on {d} must be positive, got {v}")));
            }
        }
        Ok(IndexSeries { points })
    }

    /// Index level in force on the given date: the most recent point at
    /// or before it.
    pub fn value_at(&self, date: Date) -> Result<f64> {
        let mut value = None;
        for &(d, v) in &self.points {
            if d <= date {
                value = Some(v);
            } else {
                break;
            }
        }
        value.ok_or_else(|| {
            invalid(format!("index series does not cover {date}; first point is {}", self.points[0].0))
        })
    }
}

/// Reads an index series from CSV with header `date,index`.
pub fn load_index(path: &Path) -> Result<IndexSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_error(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| parse_error(format!("{} is empty", path.display())))?
        .1
        .trim();
    if header != "date,index" {
        return Err(parse_error(format!("line 1: expected header 'date,index', got {header:?}")));
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_error(format!("line {}: expected 2 fields, got {}", idx + 1, fields.len())));
        }
        let date: Date = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_error(format!("line {}: {e}", idx + 1)))?;
        let value: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_error(format!("line {}: bad index value {:?}", idx + 1, fields[1])))?;
        points.push((date, value));
    }
    IndexSeries::new(points)
}

/// Restates every loss at the reference date's price level: each loss is
/// multiplied by index(reference) / index(event date).
pub fn adjust_cpi(
    dataset: &LossDataset,
    index: &IndexSeries,
    reference: Date,
) -> Result<LossDataset> {
    let ref_level = index.value_at(reference)?;
    let mut events = Vec::with_capacity(dataset.events.len());
    for e in &dataset.events {
        let level = index.value_at(e.date)?;
        let ratio = ref_level / level;
        events.push(LossEvent { date: e.date, loss1: e.loss1 * ratio, loss2: e.loss2 * ratio });
    }
    LossDataset::new(events, dataset.start, dataset.end)
}

/// Goodness-of-fit statistics in their standard order-statistic forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofStatistics {
    /// Kolmogorov-Smirnov: sup |F_n - F|.
    pub ks: f64,
    /// Cramer-von Mises: n times the integrated squared discrepancy.
    pub cvm: f64,
    /// Anderson-Darling: tail-weighted integrated squared discrepancy.
    pub ad: f64,
}

/// Computes the three statistics of a sample against a fitted CDF.
pub fn gof_statistics<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<GofStatistics> {
    if samples.len() < 2 {
        return Err(invalid("goodness of fit needs at least two samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let eps = 1e-15;
    let u: Vec<f64> = sorted.iter().map(|&x| cdf(x).clamp(eps, 1.0 - eps)).collect();

    let mut ks = 0.0f64;
    let mut cvm = 1.0 / (12.0 * nf);
    let mut ad = -nf;
    for (i, &ui) in u.iter().enumerate() {
        let rank = (i + 1) as f64;
        ks = ks.max(rank / nf - ui).max(ui - (rank - 1.0) / nf);
        let centered = ui - (2.0 * rank - 1.0) / (2.0 * nf);
        cvm += centered * centered;
        ad -= (2.0 * rank - 1.0) / nf * (ui.ln() + (1.0 - u[n - 1 - i]).ln());
    }
    Ok(GofStatistics { ks, cvm, ad })
}

/// The candidate severity families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityFamily {
    LogNormal,
    Gamma,
    Weibull,
    Pareto,
    InverseGaussian,
    GeneralizedExtremeValue,
}

impl SeverityFamily {
    pub const ALL: [SeverityFamily; 6] = [
        SeverityFamily::LogNormal,
        SeverityFamily::Gamma,
        SeverityFamily::Weibull,
        SeverityFamily::Pareto,
        SeverityFamily::InverseGaussian,
        SeverityFamily::GeneralizedExtremeValue,
    ];

    /// Whether the family admits a finite Laplace transform on the whole
    /// positive axis and can therefore be used as a pricing severity.
    pub fn supports_pricing(self) -> bool {
        matches!(
            self,
            SeverityFamily::LogNormal | SeverityFamily::Gamma | SeverityFamily::Weibull
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityFamily::LogNormal => "lognormal",
            SeverityFamily::Gamma => "gamma",
            SeverityFamily::Weibull => "weibull",
            SeverityFamily::Pareto => "pareto",
            SeverityFamily::InverseGaussian => "inverse_gaussian",
            SeverityFamily::GeneralizedExtremeValue => "gev",
        }
    }
}

/// A fitted severity family with its parameters, likelihood, and fit
/// statistics. `severity` is populated only for families admissible in
/// the pricing engine.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub family: SeverityFamily,
    pub params: Vec<(String, f64)>,
    pub log_likelihood: f64,
    pub gof: GofStatistics,
    pub severity: Option<Severity>,
}

/// Internal fitted-family representation carrying the distribution
/// functions needed for statistics and bootstrap resampling.
enum Fitted {
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    Pareto { scale: f64, shape: f64 },
    InverseGaussian { mean: f64, shape: f64 },
    Gev { location: f64, scale: f64, xi: f64 },
}

impl Fitted {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Fitted::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    standard_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Fitted::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    statrs::function::gamma::gamma_lr(shape, x / scale)
                }
            }
            Fitted::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Fitted::Pareto { scale, shape } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            Fitted::InverseGaussian { mean, shape } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let root = (shape / x).sqrt();
                let first = standard_normal_cdf(root * (x / mean - 1.0));
                let tail = standard_normal_cdf(-root * (x / mean + 1.0));
                let second = if tail > 0.0 { (2.0 * shape / mean + tail.ln()).exp() } else { 0.0 };
                (first + second).clamp(0.0, 1.0)
            }
            Fitted::Gev { location, scale, xi } => {
                let z = (x - location) / scale;
                if xi.abs() < 1e-12 {
                    (-(-z).exp()).exp()
                } else {
                    let t = 1.0 + xi * z;
                    if t <= 0.0 {
                        if xi > 0.0 {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        (-t.powf(-1.0 / xi)).exp()
                    }
                }
            }
        }
    }

    fn log_likelihood(&self, samples: &[f64]) -> f64 {
        match *self {
            Fitted::LogNormal { mu, sigma } => samples
                .iter()
                .map(|&x| {
                    let z = (x.ln() - mu) / sigma;
                    -x.ln() - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
                })
                .sum(),
            Fitted::Gamma { shape, scale } => samples
                .iter()
                .map(|&x| {
                    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
                })
                .sum(),
            Fitted::Weibull { shape, scale } => samples
                .iter()
                .map(|&x| {
                    let z = x / scale;
                    shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
                })
                .sum(),
            Fitted::Pareto { scale, shape } => samples
                .iter()
                .map(|&x| shape.ln() + shape * scale.ln() - (shape + 1.0) * x.ln())
                .sum(),
            Fitted::InverseGaussian { mean, shape } => samples
                .iter()
                .map(|&x| {
                    let dev = x - mean;
                    0.5 * (shape / (2.0 * std::f64::consts::PI * x * x * x)).ln()
                        - shape * dev * dev / (2.0 * mean * mean * x)
                })
                .sum(),
            Fitted::Gev { location, scale, xi } => samples
                .iter()
                .map(|&x| {
                    let z = (x - location) / scale;
                    if xi.abs() < 1e-12 {
                        -scale.ln() - z - (-z).exp()
                    } else {
                        let t = 1.0 + xi * z;
                        if t <= 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            -scale.ln() - (1.0 / xi + 1.0) * t.ln() - t.powf(-1.0 / xi)
                        }
                    }
                })
                .sum(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Fitted::LogNormal { mu, sigma } => Severity::LogNormal { mu, sigma }.sample(rng),
            Fitted::Gamma { shape, scale } => Severity::Gamma { shape, scale }.sample(rng),
            Fitted::Weibull { shape, scale } => Severity::Weibull { shape, scale }.sample(rng),
            Fitted::Pareto { scale, shape } => {
                let u: f64 = rng.random();
                Ok(scale * (1.0 - u).powf(-1.0 / shape))
            }
            Fitted::InverseGaussian { mean, shape } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let v = z * z;
                let x = mean + mean * mean * v / (2.0 * shape)
                    - mean / (2.0 * shape) * (4.0 * mean * shape * v + mean * mean * v * v).sqrt();
                let u: f64 = rng.random();
                Ok(if u <= mean / (mean + x) { x } else { mean * mean / x })
            }
            Fitted::Gev { location, scale, xi } => {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let e = -u.ln();
                Ok(if xi.abs() < 1e-12 {
                    location - scale * e.ln()
                } else {
                    location + scale * (e.powf(-xi) - 1.0) / xi
                })
            }
        }
    }

    fn report(&self, family: SeverityFamily, samples: &[f64]) -> Result<FitReport> {
        let gof = gof_statistics(samples, |x| self.cdf(x))?;
        let (params, severity): (Vec<(String, f64)>, Option<Severity>) = match *self {
            Fitted::LogNormal { mu, sigma } => (
                vec![("mu".into(), mu), ("sigma".into(), sigma)],
                Some(Severity::LogNormal { mu, sigma }),
            ),
            Fitted::Gamma { shape, scale } => (
                vec![("shape".into(), shape), ("scale".into(), scale)],
                Some(Severity::Gamma { shape, scale }),
            ),
            Fitted::Weibull { shape, scale } => (
                vec![("shape".into(), shape), ("scale".into(), scale)],
                Some(Severity::Weibull { shape, scale }),
            ),
            Fitted::Pareto { scale, shape } => {
                (vec![("scale".into(), scale), ("shape".into(), shape)], None)
            }
            Fitted::InverseGaussian { mean, shape } => {
                (vec![("mean".into(), mean), ("shape".into(), shape)], None)
            }
            Fitted::Gev { location, scale, xi } => (
                vec![("location".into(), location), ("scale".into(), scale), ("xi".into(), xi)],
                None,
            ),
        };
        Ok(FitReport {
            family,
            params,
            log_likelihood: self.log_likelihood(samples),
            gof,
            severity,
        })
    }
}

fn check_sample(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(invalid("severity fitting needs at least two samples"));
    }
    for &x in samples {
        if !(x.is_finite() && x > 0.0) {
            return Err(invalid(format!("samples must be finite and positive, got {x}")));
        }
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(invalid("degenerate sample: all observations are equal"));
    }
    Ok(())
}

/// Derivative of the digamma function, by the recurrence into the
/// asymptotic region followed by the standard series.
pub fn trigamma(mut x: f64) -> f64 {
    assert!(x > 0.0, "trigamma domain is x > 0, got {x}");
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv * (1.0 + inv / 2.0 + inv2 * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 - inv2 / 30.0))))
}

fn fit_lognormal(samples: &[f64]) -> Result<Fitted> {
    let logs: Vec<f64> = samples.iter().map(|&x| x.ln()).collect();
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let sigma = (logs.iter().map(|&l| (l - mu) * (l - mu)).sum::<f64>() / n).sqrt();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("lognormal fit is degenerate: zero log-scale spread"));
    }
    Ok(Fitted::LogNormal { mu, sigma })
}

fn fit_gamma(samples: &[f64]) -> Result<Fitted> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_log = samples.iter().map(|&x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s.is_finite() && s > 0.0) {
        return Err(invalid("gamma fit is degenerate: no spread in the sample"));
    }
    let mut k = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let fp = 1.0 / k - trigamma(k);
        let step = f / fp;
        let mut next = k - step;
        while next <= 0.0 {
            next = (k + next.max(0.0)) / 2.0;
        }
        if (next - k).abs() <= 1e-12 * k.abs() {
            k = next;
            break;
        }
        k = next;
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(tolerance("gamma shape estimation did not converge"));
    }
    Ok(Fitted::Gamma { shape: k, scale: mean / k })
}

fn fit_weibull(samples: &[f64]) -> Result<Fitted> {
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|&x| x.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let var_log = logs.iter().map(|&l| (l - mean_log) * (l - mean_log)).sum::<f64>() / n;
    if !(var_log.is_finite() && var_log > 0.0) {
        return Err(invalid("weibull fit is degenerate: no spread in the sample"));
    }
    // Moment-of-logs start: the log of a Weibull has standard deviation
    // pi / (sqrt(6) k).
    let mut k = (std::f64::consts::PI / (6.0f64.sqrt() * var_log.sqrt())).clamp(0.05, 50.0);

    // Profile likelihood score in the shape; sums are shifted by the
    // largest exponent so large samples cannot overflow x^k.
    let score = |k: f64| -> (f64, f64) {
        let m = logs.iter().fold(f64::NEG_INFINITY, |a, &l| a.max(k * l));
        let mut b = 0.0;
        let mut a = 0.0;
        let mut c = 0.0;
        for &l in &logs {
            let w = (k * l - m).exp();
            b += w;
            a += w * l;
            c += w * l * l;
        }
        let g = a / b - 1.0 / k - mean_log;
        let gp = (c * b - a * a) / (b * b) + 1.0 / (k * k);
        (g, gp)
    };
    for _ in 0..100 {
        let (g, gp) = score(k);
        let mut next = k - g / gp;
        if !next.is_finite() {
            return Err(tolerance("weibull shape estimation diverged"));
        }
        next = next.clamp(k / 3.0, k * 3.0).clamp(1e-3, 1e3);
        if (next - k).abs() <= 1e-12 * k {
            k = next;
            break;
        }
        k = next;
    }
    let m = logs.iter().fold(f64::NEG_INFINITY, |a, &l| a.max(k * l));
    let b: f64 = logs.iter().map(|&l| (k * l - m).exp()).sum();
    let scale = ((m + (b / n).ln()) / k).exp();
    if !(k.is_finite() && k > 0.0 && scale.is_finite() && scale > 0.0) {
        return Err(tolerance("weibull estimation did not converge"));
    }
    Ok(Fitted::Weibull { shape: k, scale })
}

fn fit_pareto(samples: &[f64]) -> Result<Fitted> {
    let scale = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = samples.len() as f64;
    let sum_log: f64 = samples.iter().map(|&x| (x / scale).ln()).sum();
    if !(sum_log > 0.0) {
        return Err(invalid("pareto fit is degenerate: no spread above the minimum"));
    }
    Ok(Fitted::Pareto { scale, shape: n / sum_log })
}

fn fit_inverse_gaussian(samples: &[f64]) -> Result<Fitted> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let recip_spread: f64 = samples.iter().map(|&x| 1.0 / x - 1.0 / mean).sum();
    if !(recip_spread.is_finite() && recip_spread > 0.0) {
        return Err(invalid("inverse gaussian fit is degenerate: no spread in the sample"));
    }
    Ok(Fitted::InverseGaussian { mean, shape: n / recip_spread })
}

fn fit_gev(samples: &[f64]) -> Result<Fitted> {
    // Probability-weighted moments with the Hosking estimator.
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n < 3 {
        return Err(invalid("gev fitting needs at least three samples"));
    }
    let nf = n as f64;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let r = i as f64;
        b0 += x;
        b1 += r / (nf - 1.0) * x;
        b2 += r * (r - 1.0) / ((nf - 1.0) * (nf - 2.0)) * x;
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;
    let denom = 3.0 * b2 - b0;
    if denom == 0.0 || 2.0 * b1 - b0 == 0.0 {
        return Err(invalid("gev fit is degenerate"));
    }
    let c = (2.0 * b1 - b0) / denom - 2.0f64.ln() / 3.0f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c;
    let gamma_1k = ln_gamma(1.0 + k).exp();
    if k.abs() < 1e-6 {
        let scale = (2.0 * b1 - b0) / 2.0f64.ln();
        let location = b0 - 0.577_215_664_901_532_9 * scale;
        return Ok(Fitted::Gev { location, scale, xi: 0.0 });
    }
    let scale = (2.0 * b1 - b0) * k / (gamma_1k * (1.0 - 2.0f64.powf(-k)));
    let location = b0 + scale * (gamma_1k - 1.0) / k;
    if !(scale.is_finite() && scale > 0.0 && location.is_finite()) {
        return Err(tolerance("gev moment estimation failed"));
    }
    Ok(Fitted::Gev { location, scale, xi: -k })
}

fn fit_family(samples: &[f64], family: SeverityFamily) -> Result<Fitted> {
    match family {
        SeverityFamily::LogNormal => fit_lognormal(samples),
        SeverityFamily::Gamma => fit_gamma(samples),
        SeverityFamily::Weibull => fit_weibull(samples),
        SeverityFamily::Pareto => fit_pareto(samples),
        SeverityFamily::InverseGaussian => fit_inverse_gaussian(samples),
        SeverityFamily::GeneralizedExtremeValue => fit_gev(samples),
    }
}

/// Maximum-likelihood fit of one family (probability-weighted moments
/// for the generalized extreme value family), with fit statistics.
pub fn fit_severity(samples: &[f64], family: SeverityFamily) -> Result<FitReport> {
    check_sample(samples)?;
    fit_family(samples, family)?.report(family, samples)
}

/// Fits every candidate family, returning each family's report or the
/// reason it could not be fit.
pub fn fit_severity_candidates(samples: &[f64]) -> Vec<(SeverityFamily, Result<FitReport>)> {
    SeverityFamily::ALL.iter().map(|&f| (f, fit_severity(samples, f))).collect()
}

/// Criterion for choosing among fitted families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GofCriterion {
    Ks,
    Cvm,
    Ad,
}

impl GofCriterion {
    pub fn of(self, stats: &GofStatistics) -> f64 {
        match self {
            GofCriterion::Ks => stats.ks,
            GofCriterion::Cvm => stats.cvm,
            GofCriterion::Ad => stats.ad,
        }
    }
}

/// The report minimizing the criterion, among the given reports.
pub fn select_best<'a>(
    reports: impl IntoIterator<Item = &'a FitReport>,
    criterion: GofCriterion,
) -> Option<&'a FitReport> {
    reports
        .into_iter()
        .min_by(|a, b| criterion.of(&a.gof).total_cmp(&criterion.of(&b.gof)))
}

/// Bootstrap p-values for the three fit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofPValues {
    pub ks: f64,
    pub cvm: f64,
    pub ad: f64,
    pub replicates: usize,
}

/// Parametric bootstrap of the fit statistics: resamples from the fitted
/// law, refits, and counts replicate statistics at least as extreme as
/// the observed ones.
pub fn bootstrap_gof(
    samples: &[f64],
    family: SeverityFamily,
    replicates: usize,
    seed: u64,
) -> Result<GofPValues> {
    if replicates < 10 || replicates > 100_000 {
        return Err(invalid(format!("replicate count out of range: {replicates}")));
    }
    check_sample(samples)?;
    let fitted = fit_family(samples, family)?;
    let observed = gof_statistics(samples, |x| fitted.cdf(x))?;
    let n = samples.len();

    let stats: Vec<Option<GofStatistics>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let mut resample = Vec::with_capacity(n);
            for _ in 0..n {
                match fitted.sample(&mut rng) {
                    Ok(x) if x.is_finite() && x > 0.0 => resample.push(x),
                    _ => return None,
                }
            }
            let refit = fit_family(&resample, family).ok()?;
            gof_statistics(&resample, |x| refit.cdf(x)).ok()
        })
        .collect();

    let valid: Vec<&GofStatistics> = stats.iter().flatten().collect();
    if valid.len() < replicates / 2 {
        return Err(tolerance(format!(
            "only {} of {replicates} bootstrap replicates were usable",
            valid.len()
        )));
    }
    let m = valid.len() as f64;
    let count = |f: &dyn Fn(&GofStatistics) -> f64| {
        let obs = f(&observed);
        let exceed = valid.iter().filter(|s| f(s) >= obs).count() as f64;
        (1.0 + exceed) / (1.0 + m)
    };
    Ok(GofPValues {
        ks: count(&|s| s.ks),
        cvm: count(&|s| s.cvm),
        ad: count(&|s| s.ad),
        replicates: valid.len(),
    })
}

fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&next().to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Least-squares homogeneous Poisson intensity fit with its error
/// metrics on the cumulative-count curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityFit {
    pub lambda: f64,
    pub mse: f64,
    pub mae: f64,
    /// Mean absolute percentage error, in percent, over points with a
    /// nonzero count.
    pub mape: f64,
    pub events: usize,
}

/// Fits the intensity by least squares of lambda * t against the
/// cumulative event count at the event times: the closed-form minimizer
/// of sum (lambda t_k - k)^2.
pub fn estimate_intensity(event_times: &[f64]) -> Result<IntensityFit> {
    if event_times.is_empty() {
        return Err(invalid("intensity estimation needs at least one event"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &t) in event_times.iter().enumerate() {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid(format!("event times must be finite and nonnegative, got {t}")));
        }
        if i > 0 && t < event_times[i - 1] {
            return Err(invalid("event times must be nondecreasing"));
        }
        let k = (i + 1) as f64;
        num += t * k;
        den += t * t;
    }
    if den == 0.0 {
        return Err(invalid("all events at time zero; intensity is not identifiable"));
    }
    let lambda = num / den;
    let mut mse = 0.0;
    let mut mae = 0.0;
    let mut mape = 0.0;
    let mut mape_count = 0usize;
    for (i, &t) in event_times.iter().enumerate() {
        let k = (i + 1) as f64;
        let err = lambda * t - k;
        mse += err * err;
        mae += err.abs();
        if k > 0.0 {
            mape += (err / k).abs();
            mape_count += 1;
        }
    }
    let n = event_times.len() as f64;
    Ok(IntensityFit {
        lambda,
        mse: mse / n,
        mae: mae / n,
        mape: 100.0 * mape / mape_count.max(1) as f64,
        events: event_times.len(),
    })
}

/// Parametric bootstrap confidence interval for the intensity estimator:
/// simulates Poisson histories at the given intensity over the window and
/// returns the central interval of the refitted intensities.
pub fn intensity_bootstrap_interval(
    lambda: f64,
    window_years: f64,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("intensity must be positive, got {lambda}")));
    }
    if !(window_years > 0.0 && window_years.is_finite()) {
        return Err(invalid(format!("window must be positive, got {window_years}")));
    }
    if replicates < 100 || replicates > 100_000 {
        return Err(invalid(format!("replicate count out of range: {replicates}")));
    }
    if !(level > 0.5 && level < 1.0) {
        return Err(invalid(format!("confidence level must lie in (0.5, 1), got {level}")));
    }
    let mut fits: Vec<f64> = (0..replicates)
        .into_par_iter()
        .filter_map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let mut times = Vec::new();
            let mut t = 0.0;
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / lambda;
                if t > window_years {
                    break;
                }
                times.push(t);
            }
            estimate_intensity(&times).ok().map(|f| f.lambda)
        })
        .collect();
    if fits.len() < replicates / 2 {
        return Err(tolerance("too many empty bootstrap histories"));
    }
    fits.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo_idx = ((fits.len() as f64 - 1.0) * tail).floor() as usize;
    let hi_idx = ((fits.len() as f64 - 1.0) * (1.0 - tail)).ceil() as usize;
    Ok((fits[lo_idx], fits[hi_idx.min(fits.len() - 1)]))
}

/// Beta fit of the observed region-1 loss proportions.
#[derive(Debug, Clone, Serialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    /// Events excluded because a regional loss was zero (proportion on
    /// the boundary).
    pub excluded: usize,
    pub log_likelihood: f64,
    pub gof: GofStatistics,
}

/// Per-event proportions loss1 / (loss1 + loss2), excluding events where
/// either loss is zero; returns the kept proportions and the exclusion
/// count.
pub fn proportions(dataset: &LossDataset) -> (Vec<f64>, usize) {
    let mut kept = Vec::with_capacity(dataset.events.len());
    let mut excluded = 0usize;
    for e in &dataset.events {
        if e.loss1 > 0.0 && e.loss2 > 0.0 {
            kept.push(e.loss1 / (e.loss1 + e.loss2));
        } else {
            excluded += 1;
        }
    }
    (kept, excluded)
}

/// Beta maximum likelihood on proportion samples: Newton iteration on the
/// digamma score equations from a method-of-moments start.
pub fn fit_beta(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(invalid("beta fitting needs at least two samples"));
    }
    for &p in samples {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("proportions must lie strictly in (0, 1), got {p}")));
        }
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|&p| (p - mean) * (p - mean)).sum::<f64>() / n;
    if var <= 1e-14 {
        return Err(invalid("degenerate proportions: no spread, beta likelihood diverges"));
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    if !(common > 0.0) {
        return Err(invalid("proportion sample variance exceeds the beta family's range"));
    }
    let mut a = mean * common;
    let mut b = (1.0 - mean) * common;
    let g1 = samples.iter().map(|&p| p.ln()).sum::<f64>() / n;
    let g2 = samples.iter().map(|&p| (1.0 - p).ln()).sum::<f64>() / n;

    for _ in 0..200 {
        let f1 = digamma(a) - digamma(a + b) - g1;
        let f2 = digamma(b) - digamma(a + b) - g2;
        let taa = trigamma(a) - trigamma(a + b);
        let tbb = trigamma(b) - trigamma(a + b);
        let tab = -trigamma(a + b);
        let det = taa * tbb - tab * tab;
        if det.abs() < 1e-300 {
            return Err(tolerance("beta fit: singular Newton system"));
        }
        let da = (f1 * tbb - f2 * tab) / det;
        let db = (f2 * taa - f1 * tab) / det;
        let mut scale = 1.0;
        while a - scale * da <= 0.0 || b - scale * db <= 0.0 {
            scale *= 0.5;
            if scale < 1e-8 {
                return Err(tolerance("beta fit: Newton step could not stay positive"));
            }
        }
        let na = a - scale * da;
        let nb = b - scale * db;
        let done = (na - a).abs() <= 1e-12 * a && (nb - b).abs() <= 1e-12 * b;
        a = na;
        b = nb;
        if done {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(tolerance("beta fit did not converge"));
    }
    Ok((a, b))
}

/// Fits a beta law to the proportions observed in a dataset.
pub fn fit_proportion(dataset: &LossDataset) -> Result<BetaFit> {
    let (props, excluded) = proportions(dataset);
    if props.len() < 2 {
        return Err(invalid(format!(
            "not enough two-sided loss events to fit a proportion law ({} kept, {excluded} excluded)",
            props.len()
        )));
    }
    let (alpha, beta) = fit_beta(&props)?;
    let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
    let log_likelihood = props
        .iter()
        .map(|&p| (alpha - 1.0) * p.ln() + (beta - 1.0) * (1.0 - p).ln() - ln_b)
        .sum();
    let gof = gof_statistics(&props, |p| {
        if p <= 0.0 {
            0.0
        } else if p >= 1.0 {
            1.0
        } else {
            beta_reg(alpha, beta, p)
        }
    })?;
    Ok(BetaFit { alpha, beta, excluded, log_likelihood, gof })
}

/// Derives the equity impact coefficients from a loss-effect parameter:
/// a loss of one expected severity moves the log share price by delta.
/// Independent streams and common shocks use each region's own severity
/// mean; the proportional structure splits the total severity mean by the
/// expected proportion.
pub fn impact_coefficients(delta: f64, model: &LossModel) -> Result<Impact> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("loss-effect delta must be positive, got {delta}")));
    }
    model.validate()?;
    let check = |m: f64| -> Result<f64> {
        if m.is_finite() && m > 0.0 {
            Ok(m)
        } else {
            Err(invalid(format!("severity mean must be finite and positive, got {m}")))
        }
    };
    let impact = match model {
        LossModel::Independent { region1, region2 } => Impact {
            alpha: delta / check(region1.severity.mean()?)?,
            beta: delta / check(region2.severity.mean()?)?,
        },
        LossModel::CommonShock { severity1, severity2, .. } => Impact {
            alpha: delta / check(severity1.mean()?)?,
            beta: delta / check(severity2.mean()?)?,
        },
        LossModel::Proportional { severity, proportion, .. } => {
            let mean_x = check(severity.mean()?)?;
            let mean_p = proportion.mean();
            if !(mean_p > 0.0 && mean_p < 1.0) {
                return Err(invalid(format!("mean proportion must lie in (0, 1), got {mean_p}")));
            }
            Impact { alpha: delta / (mean_p * mean_x), beta: delta / ((1.0 - mean_p) * mean_x) }
        }
    };
    impact.validate()?;
    Ok(impact)
}

/// Generates a synthetic dataset from a shared event stream with
/// independent per-region severities.
pub fn synthesize_common_shock_dataset(
    lambda: f64,
    severity1: &Severity,
    severity2: &Severity,
    window_years: f64,
    start: Date,
    seed: u64,
) -> Result<LossDataset> {
    synthesize(lambda, window_years, start, seed, |rng| {
        Ok((severity1.sample(rng)?, severity2.sample(rng)?))
    })
}

/// Generates a synthetic dataset from a shared event stream with one
/// total severity split per event. Splits are drawn per event so the
/// dataset carries the split variability the proportion law describes.
pub fn synthesize_proportional_dataset(
    lambda: f64,
    severity: &Severity,
    proportion: &Proportion,
    window_years: f64,
    start: Date,
    seed: u64,
) -> Result<LossDataset> {
    synthesize(lambda, window_years, start, seed, |rng| {
        let x = severity.sample(rng)?;
        let p = proportion.sample(rng)?;
        Ok((p * x, (1.0 - p) * x))
    })
}

fn synthesize<F>(
    lambda: f64,
    window_years: f64,
    start: Date,
    seed: u64,
    mut draw: F,
) -> Result<LossDataset>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<(f64, f64)>,
{
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("intensity must be positive, got {lambda}")));
    }
    if !(window_years > 0.0 && window_years.is_finite() && window_years <= 10_000.0) {
        return Err(invalid(format!("window out of range: {window_years}")));
    }
    let mut rng = replicate_rng(seed, 0);
    let start_days = start.days_from_epoch();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / lambda;
        if t > window_years {
            break;
        }
        let (loss1, loss2) = draw(&mut rng)?;
        let date = Date::from_days(start_days + (t * 365.25).floor() as i64);
        events.push(LossEvent { date, loss1, loss2 });
    }
    if events.is_empty() {
        return Err(tolerance(
            "the synthetic window produced no events; enlarge it or raise the intensity",
        ));
    }
    let end = Date::from_days(start_days + (window_years * 365.25).ceil() as i64);
    LossDataset::new(events, start, end)
}
