//! The `price` subcommand: one closed-form valuation.

use std::path::PathBuf;

use clap::Args;

use super::VariantArgs;
use crate::config;
use crate::errors::CliResult;
use crate::output;

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Run configuration JSON file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Region 1 threshold, overriding the config.
    #[arg(long, value_name = "LOSS")]
    pub d1: Option<f64>,
    /// Region 2 threshold, overriding the config.
    #[arg(long, value_name = "LOSS")]
    pub d2: Option<f64>,
    /// Conversion price exponent, overriding the config.
    #[arg(long, value_name = "NU")]
    pub nu: Option<f64>,
    /// Converted fraction of face value, overriding the config.
    #[arg(long, value_name = "FRACTION")]
    pub zeta: Option<f64>,
    #[command(flatten)]
    pub variants: VariantArgs,
    /// Also write the JSON breakdown to this file.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

pub fn run(args: PriceArgs) -> CliResult<()> {
    let mut cfg = config::load(&args.config)?;
    if let Some(d1) = args.d1 {
        cfg.thresholds.d1 = d1;
    }
    if let Some(d2) = args.d2 {
        cfg.thresholds.d2 = d2;
    }
    if let Some(nu) = args.nu {
        cfg.covenant.nu = nu;
    }
    if let Some(zeta) = args.zeta {
        cfg.covenant.conversion_fraction = zeta;
    }
    args.variants.apply(&mut cfg.numerics);
    config::validate(&cfg)?;
    let impact = config::resolve_impact(&cfg)?;

    let breakdown = cococat::price(
        &cfg.covenant,
        &cfg.market,
        &cfg.model,
        &impact,
        cfg.thresholds.d1,
        cfg.thresholds.d2,
        &cfg.numerics,
    )?;

    let json = output::to_json_pretty(&breakdown);
    if let Some(out) = &args.out {
        output::write_file(out, &json)?;
    }
    print!("{json}");
    Ok(())
}
