//! Fits a loss model to a historical catastrophe dataset and emits a
//! ready-to-price run configuration.
//!
//! The fitting stages are: optional price-level restatement, event
//! intensity per stream, severity family selection per loss target, and
//! for the proportional structure a beta law for the regional split.
//! Every candidate family is reported with its statistics or its fitting
//! error; the emitted configuration embeds the selected laws and the
//! derived equity impact coefficients.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use cococat::calibration::{
    adjust_cpi, bootstrap_gof, estimate_intensity, fit_proportion, fit_severity,
    fit_severity_candidates, impact_coefficients, intensity_bootstrap_interval, load_index,
    load_losses, select_best, BetaFit, Date, FitReport, GofCriterion, GofPValues, GofStatistics,
    IntensityFit, LossDataset, LossEvent, SeverityFamily,
};
use cococat::{CompoundPoisson, Impact, LossModel, Proportion, Severity};

use crate::config::{self, RunConfig, Thresholds};
use crate::errors::{CliError, CliResult};
use crate::output;

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Loss history CSV with header date,loss_region1,loss_region2
    #[arg(long)]
    pub data: PathBuf,

    /// Dependence structure to calibrate
    #[arg(long, value_enum)]
    pub mode: ModeArg,

    /// Price index CSV with header date,index; losses are restated to
    /// the reference date's price level before fitting
    #[arg(long)]
    pub cpi: Option<PathBuf>,

    /// Reference date (YYYY-MM-DD) for the price-level restatement;
    /// defaults to the end of the observation window
    #[arg(long)]
    pub cpi_reference: Option<String>,

    /// Loss-effect parameter: a loss of one expected severity moves the
    /// log share price by this amount
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,

    /// Fit statistic used to select the severity family
    #[arg(long, value_enum, default_value_t = CriterionArg::Ks)]
    pub criterion: CriterionArg,

    /// Force this severity family instead of selecting by fit statistic
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,

    /// Bootstrap replicates for severity fit p-values (0 skips)
    #[arg(long, default_value_t = 0)]
    pub gof_bootstrap: usize,

    /// Bootstrap replicates for the 95% intensity confidence interval
    /// (0 skips)
    #[arg(long, default_value_t = 1000)]
    pub intensity_bootstrap: usize,

    /// Seed for the bootstrap resamplers
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Existing run configuration whose contract, market, and numerical
    /// settings carry over into the emitted configuration
    #[arg(long)]
    pub template: Option<PathBuf>,

    /// Write the emitted run configuration to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Two independent regional event streams
    Independent,
    /// One shared event stream striking both regions at once
    CommonShock,
    /// One total-loss stream split between regions by a random proportion
    Proportional,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Independent => "independent",
            ModeArg::CommonShock => "common_shock",
            ModeArg::Proportional => "proportional",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    /// Kolmogorov-Smirnov statistic
    Ks,
    /// Cramer-von Mises statistic
    Cvm,
    /// Anderson-Darling statistic
    Ad,
}

impl CriterionArg {
    fn name(self) -> &'static str {
        match self {
            CriterionArg::Ks => "ks",
            CriterionArg::Cvm => "cvm",
            CriterionArg::Ad => "ad",
        }
    }
}

impl From<CriterionArg> for GofCriterion {
    fn from(value: CriterionArg) -> GofCriterion {
        match value {
            CriterionArg::Ks => GofCriterion::Ks,
            CriterionArg::Cvm => GofCriterion::Cvm,
            CriterionArg::Ad => GofCriterion::Ad,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    LogNormal,
    Gamma,
    Weibull,
    Pareto,
    InverseGaussian,
    Gev,
}

impl From<FamilyArg> for SeverityFamily {
    fn from(value: FamilyArg) -> SeverityFamily {
        match value {
            FamilyArg::LogNormal => SeverityFamily::LogNormal,
            FamilyArg::Gamma => SeverityFamily::Gamma,
            FamilyArg::Weibull => SeverityFamily::Weibull,
            FamilyArg::Pareto => SeverityFamily::Pareto,
            FamilyArg::InverseGaussian => SeverityFamily::InverseGaussian,
            FamilyArg::Gev => SeverityFamily::GeneralizedExtremeValue,
        }
    }
}

#[derive(Serialize)]
struct DataSection {
    path: String,
    events: usize,
    window_start: String,
    window_end: String,
    window_years: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cpi_reference: Option<String>,
}

#[derive(Serialize)]
struct NamedIntensity {
    stream: &'static str,
    /// Events left out of this stream because its loss was zero.
    excluded_zero: usize,
    #[serde(flatten)]
    fit: IntensityFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval95: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct CandidateReport {
    family: &'static str,
    pricing_supported: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<Vec<(String, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gof: Option<GofStatistics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct SelectedReport {
    /// "forced" when --family was given, otherwise the criterion name.
    selection: &'static str,
    #[serde(flatten)]
    fit: FitReport,
}

#[derive(Serialize)]
struct NamedSeverity {
    target: &'static str,
    samples: usize,
    /// Rows left out of this sample because the loss was zero.
    excluded_zero: usize,
    candidates: Vec<CandidateReport>,
    selected: SelectedReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    gof_p_values: Option<GofPValues>,
}

#[derive(Serialize)]
struct ProportionSection {
    #[serde(flatten)]
    fit: BetaFit,
    mean: f64,
}

#[derive(Serialize)]
struct CalibrationReport {
    schema_version: u32,
    mode: &'static str,
    data: DataSection,
    intensity: Vec<NamedIntensity>,
    severities: Vec<NamedSeverity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    proportion: Option<ProportionSection>,
    impact: Impact,
    config: RunConfig,
}

struct StreamSpec {
    name: &'static str,
    times: Vec<f64>,
    excluded: usize,
}

fn stream(
    dataset: &LossDataset,
    name: &'static str,
    keep: impl Fn(&LossEvent) -> bool,
) -> StreamSpec {
    let mut times = Vec::new();
    let mut excluded = 0usize;
    for event in &dataset.events {
        if keep(event) {
            times.push(event.date.years_since(dataset.start));
        } else {
            excluded += 1;
        }
    }
    StreamSpec { name, times, excluded }
}

fn positive(values: Vec<f64>) -> (Vec<f64>, usize) {
    let mut kept = Vec::with_capacity(values.len());
    let mut excluded = 0usize;
    for v in values {
        if v > 0.0 {
            kept.push(v);
        } else {
            excluded += 1;
        }
    }
    (kept, excluded)
}

fn fit_stream(
    spec: StreamSpec,
    bootstrap: usize,
    seed: u64,
    window_years: f64,
) -> CliResult<NamedIntensity> {
    let fit = estimate_intensity(&spec.times).map_err(CliError::fit)?;
    let interval95 = if bootstrap > 0 {
        let interval =
            intensity_bootstrap_interval(fit.lambda, window_years, bootstrap, 0.95, seed)
                .map_err(CliError::fit)?;
        Some(interval)
    } else {
        None
    };
    Ok(NamedIntensity { stream: spec.name, excluded_zero: spec.excluded, fit, interval95 })
}

struct SeverityOutcome {
    section: NamedSeverity,
    severity: Severity,
}

#[allow(clippy::too_many_arguments)]
fn fit_target(
    target: &'static str,
    samples: &[f64],
    excluded: usize,
    forced: Option<SeverityFamily>,
    criterion: GofCriterion,
    criterion_name: &'static str,
    gof_bootstrap: usize,
    seed: u64,
) -> CliResult<SeverityOutcome> {
    let candidates = fit_severity_candidates(samples);
    let candidate_reports = candidates
        .iter()
        .map(|(family, result)| match result {
            Ok(report) => CandidateReport {
                family: family.name(),
                pricing_supported: family.supports_pricing(),
                params: Some(report.params.clone()),
                log_likelihood: Some(report.log_likelihood),
                gof: Some(report.gof),
                error: None,
            },
            Err(e) => CandidateReport {
                family: family.name(),
                pricing_supported: family.supports_pricing(),
                params: None,
                log_likelihood: None,
                gof: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let (selected, selection) = match forced {
        Some(family) => {
            let report = fit_severity(samples, family).map_err(CliError::fit)?;
            (report, "forced")
        }
        None => {
            let eligible = candidates
                .iter()
                .filter(|(family, _)| family.supports_pricing())
                .filter_map(|(_, result)| result.as_ref().ok());
            let best = select_best(eligible, criterion).ok_or_else(|| {
                CliError::numerical(format!(
                    "no pricing-capable severity family could be fitted to the {target} losses"
                ))
            })?;
            (best.clone(), criterion_name)
        }
    };

    let gof_p_values = if gof_bootstrap > 0 {
        let p = bootstrap_gof(samples, selected.family, gof_bootstrap, seed)
            .map_err(CliError::fit)?;
        Some(p)
    } else {
        None
    };

    let severity = selected.severity.clone().ok_or_else(|| {
        CliError::numerical(format!(
            "family {} fits the {target} losses but has no pricing law",
            selected.family.name()
        ))
    })?;

    Ok(SeverityOutcome {
        section: NamedSeverity {
            target,
            samples: samples.len(),
            excluded_zero: excluded,
            candidates: candidate_reports,
            selected: SelectedReport { selection, fit: selected },
            gof_p_values,
        },
        severity,
    })
}

pub fn run(args: CalibrateArgs) -> CliResult<()> {
    if args.cpi_reference.is_some() && args.cpi.is_none() {
        return Err(CliError::usage("--cpi-reference requires --cpi"));
    }
    if args.gof_bootstrap > 0 && !(10..=100_000).contains(&args.gof_bootstrap) {
        return Err(CliError::usage(format!(
            "--gof-bootstrap must be 0 or between 10 and 100000, got {}",
            args.gof_bootstrap
        )));
    }
    if args.intensity_bootstrap > 0 && !(100..=100_000).contains(&args.intensity_bootstrap) {
        return Err(CliError::usage(format!(
            "--intensity-bootstrap must be 0 or between 100 and 100000, got {}",
            args.intensity_bootstrap
        )));
    }
    let forced = args.family.map(SeverityFamily::from);
    if let Some(family) = forced {
        if !family.supports_pricing() {
            return Err(CliError::usage(format!(
                "severity family {} has no pricing law; choose log-normal, gamma, or weibull",
                family.name()
            )));
        }
    }

    let mut dataset = load_losses(&args.data)?;
    let mut cpi_reference = None;
    if let Some(cpi_path) = &args.cpi {
        let index = load_index(cpi_path)?;
        let reference = match &args.cpi_reference {
            Some(text) => text
                .parse::<Date>()
                .map_err(|e| CliError::usage(format!("--cpi-reference: {e}")))?,
            None => dataset.end,
        };
        dataset = adjust_cpi(&dataset, &index, reference)?;
        cpi_reference = Some(reference.to_string());
    }

    let criterion = GofCriterion::from(args.criterion);
    let criterion_name = args.criterion.name();
    let window_years = dataset.window_years();
    let seed = args.seed;

    let mut intensities = Vec::new();
    let mut severities = Vec::new();
    let mut proportion = None;

    let model = match args.mode {
        ModeArg::Independent => {
            let stream1 = stream(&dataset, "region1", |e| e.loss1 > 0.0);
            let stream2 = stream(&dataset, "region2", |e| e.loss2 > 0.0);
            let (losses1, zeros1) = positive(dataset.region1_losses());
            let (losses2, zeros2) = positive(dataset.region2_losses());
            let intensity1 =
                fit_stream(stream1, args.intensity_bootstrap, seed, window_years)?;
            let intensity2 =
                fit_stream(stream2, args.intensity_bootstrap, seed.wrapping_add(1), window_years)?;
            let fit1 = fit_target(
                "region1",
                &losses1,
                zeros1,
                forced,
                criterion,
                criterion_name,
                args.gof_bootstrap,
                seed.wrapping_add(2),
            )?;
            let fit2 = fit_target(
                "region2",
                &losses2,
                zeros2,
                forced,
                criterion,
                criterion_name,
                args.gof_bootstrap,
                seed.wrapping_add(3),
            )?;
            let model = LossModel::Independent {
                region1: CompoundPoisson {
                    lambda: intensity1.fit.lambda,
                    severity: fit1.severity.clone(),
                },
                region2: CompoundPoisson {
                    lambda: intensity2.fit.lambda,
                    severity: fit2.severity.clone(),
                },
            };
            intensities.push(intensity1);
            intensities.push(intensity2);
            severities.push(fit1.section);
            severities.push(fit2.section);
            model
        }
        ModeArg::CommonShock => {
            let shared = stream(&dataset, "common", |e| e.loss1 + e.loss2 > 0.0);
            let (losses1, zeros1) = positive(dataset.region1_losses());
            let (losses2, zeros2) = positive(dataset.region2_losses());
            let intensity =
                fit_stream(shared, args.intensity_bootstrap, seed, window_years)?;
            let fit1 = fit_target(
                "region1",
                &losses1,
                zeros1,
                forced,
                criterion,
                criterion_name,
                args.gof_bootstrap,
                seed.wrapping_add(2),
            )?;
            let fit2 = fit_target(
                "region2",
                &losses2,
                zeros2,
                forced,
                criterion,
                criterion_name,
                args.gof_bootstrap,
                seed.wrapping_add(3),
            )?;
            let model = LossModel::CommonShock {
                lambda: intensity.fit.lambda,
                severity1: fit1.severity.clone(),
                severity2: fit2.severity.clone(),
            };
            intensities.push(intensity);
            severities.push(fit1.section);
            severities.push(fit2.section);
            model
        }
        ModeArg::Proportional => {
            let total_stream = stream(&dataset, "total", |e| e.loss1 + e.loss2 > 0.0);
            let (totals, zeros) = positive(dataset.total_losses());
            let intensity =
                fit_stream(total_stream, args.intensity_bootstrap, seed, window_years)?;
            let fit_total = fit_target(
                "total",
                &totals,
                zeros,
                forced,
                criterion,
                criterion_name,
                args.gof_bootstrap,
                seed.wrapping_add(2),
            )?;
            let beta_fit = fit_proportion(&dataset).map_err(CliError::fit)?;
            let mean = beta_fit.alpha / (beta_fit.alpha + beta_fit.beta);
            let model = LossModel::Proportional {
                lambda: intensity.fit.lambda,
                severity: fit_total.severity.clone(),
                proportion: Proportion::Beta { alpha: beta_fit.alpha, beta: beta_fit.beta },
            };
            intensities.push(intensity);
            severities.push(fit_total.section);
            proportion = Some(ProportionSection { mean, fit: beta_fit });
            model
        }
    };
    model.validate().map_err(CliError::fit)?;

    let impact = impact_coefficients(args.delta, &model)
        .map_err(|e| CliError::usage(e.to_string()))?;

    let mut emitted = match &args.template {
        Some(path) => config::load(path)?,
        None => RunConfig {
            schema_version: config::SCHEMA_VERSION,
            covenant: config::example_covenant(),
            market: config::example_market(),
            model: model.clone(),
            impact: None,
            delta: None,
            thresholds: Thresholds { d1: 2.0, d2: 2.0 },
            numerics: Default::default(),
            simulation: Default::default(),
            output_dir: None,
        },
    };
    emitted.model = model;
    emitted.impact = Some(impact);
    emitted.delta = None;
    config::validate(&emitted).map_err(|e| CliError {
        code: e.code,
        message: format!("emitted configuration is not valid: {}", e.message),
    })?;

    if let Some(out) = &args.out {
        output::write_file(out, &output::to_json_pretty(&emitted))?;
    }

    let report = CalibrationReport {
        schema_version: config::SCHEMA_VERSION,
        mode: args.mode.name(),
        data: DataSection {
            path: args.data.display().to_string(),
            events: dataset.events.len(),
            window_start: dataset.start.to_string(),
            window_end: dataset.end.to_string(),
            window_years,
            cpi_reference,
        },
        intensity: intensities,
        severities,
        proportion,
        impact,
        config: emitted,
    };
    print!("{}", output::to_json_pretty(&report));
    Ok(())
}
