//! The `validate` subcommand: closed-form prices, the martingale
//! property of the catastrophic impact factor, and trigger survival
//! probabilities, each checked against simulation with a z-score. The
//! command exits nonzero when any check lands more than three standard
//! errors out.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use cococat::loss_models::kappa;
use cococat::mc::{self, McEstimate, SimulationConfig};
use cococat::pricing::{CouponVariant, ExponentVariant};
use cococat::{trigger_law, Kappa};

use super::VariantArgs;
use crate::config;
use crate::errors::{CliError, CliResult};
use crate::output;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Run configuration JSON file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Path count for the pricing and martingale checks.
    #[arg(long, value_name = "N")]
    pub paths: Option<usize>,
    /// Path count for the event-driven trigger checks; defaults to the
    /// pricing path count.
    #[arg(long, value_name = "N")]
    pub trigger_paths: Option<usize>,
    /// RNG seed, overriding the config.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Rate-integral step bound in years, overriding the config.
    #[arg(long, value_name = "YEARS")]
    pub step: Option<f64>,
    /// Perturb the martingale compensator by +0.1; the martingale
    /// checks must then fail, demonstrating that the suite detects a
    /// wrong compensator.
    #[arg(long)]
    pub negative_control: bool,
    #[command(flatten)]
    pub variants: VariantArgs,
    /// Also write the JSON report to this file.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Check {
    name: String,
    analytic: f64,
    estimate: f64,
    /// Standard error of the estimate; zero marks a degenerate check
    /// that must agree exactly.
    std_error: f64,
    /// Standardized distance; serialized as null when the estimate is
    /// degenerate and disagrees.
    z: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ValidationReport {
    schema_version: u32,
    coupon_variant: CouponVariant,
    exponent_variant: ExponentVariant,
    negative_control: bool,
    paths: usize,
    trigger_paths: usize,
    seed: u64,
    step: f64,
    checks: Vec<Check>,
    pass: bool,
}

fn check(name: String, analytic: f64, estimate: &McEstimate) -> Check {
    let z = estimate.z_score(analytic);
    Check {
        name,
        analytic,
        estimate: estimate.mean,
        std_error: estimate.std_error,
        z,
        pass: z.abs() <= 3.0,
    }
}

fn binomial_check(name: String, analytic: f64, hits: usize, n: usize) -> Check {
    let estimate = hits as f64 / n as f64;
    let sigma = (analytic * (1.0 - analytic) / n as f64).sqrt();
    let z = if sigma > 0.0 {
        (estimate - analytic) / sigma
    } else if estimate == analytic {
        0.0
    } else {
        f64::INFINITY * (estimate - analytic).signum()
    };
    Check { name, analytic, estimate, std_error: sigma, z, pass: z.abs() <= 3.0 }
}

fn perturbed(kap: &Kappa) -> Kappa {
    match *kap {
        Kappa::PerRegion { kappa1, kappa2 } => {
            Kappa::PerRegion { kappa1: kappa1 + 0.1, kappa2: kappa2 + 0.1 }
        }
        Kappa::Common { kappa } => Kappa::Common { kappa: kappa + 0.1 },
    }
}

pub fn run(args: ValidateArgs) -> CliResult<()> {
    let mut cfg = config::load(&args.config)?;
    args.variants.apply(&mut cfg.numerics);
    let impact = config::resolve_impact(&cfg)?;

    let mut sim = cfg.simulation;
    if let Some(paths) = args.paths {
        sim.paths = paths;
    }
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    if let Some(step) = args.step {
        sim.step = step;
    }
    sim.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let trigger_paths = args.trigger_paths.unwrap_or(sim.paths);
    let (d1, d2) = (cfg.thresholds.d1, cfg.thresholds.d2);
    let maturity = cfg.covenant.maturity;

    let analytic =
        cococat::price(&cfg.covenant, &cfg.market, &cfg.model, &impact, d1, d2, &cfg.numerics)?;
    let simulated =
        mc::simulate_price(&cfg.covenant, &cfg.market, &cfg.model, &impact, d1, d2, &sim)?;
    let mut checks = vec![
        check("price.coupon_leg".into(), analytic.coupon_leg, &simulated.coupon_leg),
        check("price.conversion_leg".into(), analytic.conversion_leg, &simulated.conversion_leg),
        check("price.principal_leg".into(), analytic.principal_leg, &simulated.principal_leg),
        check("price.total".into(), analytic.total, &simulated.total),
    ];

    let mut kap = kappa(&cfg.model, &impact, cfg.numerics.proportion_nodes)?;
    if args.negative_control {
        kap = perturbed(&kap);
    }
    for frac in [0.2, 1.0] {
        let t = maturity * frac;
        let estimate = mc::simulate_martingale(&cfg.model, &impact, &kap, t, &sim)?;
        checks.push(check(format!("martingale.t={t}"), 1.0, &estimate));
    }

    let law = trigger_law(&cfg.model, d1, d2, maturity, None, &cfg.numerics)?;
    let trigger_sim = SimulationConfig { paths: trigger_paths, ..sim };
    let taus = mc::simulate_trigger_times(&cfg.model, d1, d2, maturity, &trigger_sim)?;
    for frac in [0.1, 0.2, 0.5, 1.0] {
        let t = maturity * frac;
        let survived = taus.iter().filter(|&&tau| tau > t).count();
        checks.push(binomial_check(
            format!("trigger.survival.t={t}"),
            law.survival(t),
            survived,
            taus.len(),
        ));
    }

    let pass = checks.iter().all(|c| c.pass);
    let failed = checks.iter().filter(|c| !c.pass).count();
    let total = checks.len();
    let report = ValidationReport {
        schema_version: config::SCHEMA_VERSION,
        coupon_variant: cfg.numerics.coupon_variant,
        exponent_variant: cfg.numerics.exponent_variant,
        negative_control: args.negative_control,
        paths: sim.paths,
        trigger_paths,
        seed: sim.seed,
        step: sim.step,
        checks,
        pass,
    };
    let json = output::to_json_pretty(&report);
    if let Some(out) = &args.out {
        output::write_file(out, &json)?;
    }
    print!("{json}");
    if pass {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "validation failed: {failed} of {total} checks more than 3 standard errors out"
        )))
    }
}
