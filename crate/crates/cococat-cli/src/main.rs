//! Command-line front end for the CoCoCat bond pricing library:
//! configuration-driven pricing, threshold sweeps, loss-data
//! calibration, Monte Carlo simulation, and analytic-versus-simulation
//! validation.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! failure or failed validation, 3 I/O or data-file error.

mod commands;
mod config;
mod errors;
mod grid;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Pricing toolkit for contingent convertible catastrophe bonds.
#[derive(Parser)]
#[command(name = "cococat", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one bond and print the per-leg breakdown as JSON.
    Price(commands::price::PriceArgs),
    /// Price over a threshold and exponent grid, writing a CSV table.
    Sweep(commands::sweep::SweepArgs),
    /// Fit intensity, severity, and proportion laws from loss records.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Monte Carlo price with per-leg standard errors.
    Simulate(commands::simulate::SimulateArgs),
    /// Check analytic results against simulation and report z-scores.
    Validate(commands::validate::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(errors::EXIT_CONFIG),
            };
        }
    };
    let result = match cli.command {
        Command::Price(args) => commands::price::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Calibrate(args) => commands::calibrate::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Validate(args) => commands::validate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
