//! The `sweep` subcommand: prices over a Cartesian grid of thresholds
//! (absolute values or severity quantile levels) and conversion
//! exponents, written as CSV with a monotonicity summary on stdout.

use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;

use cococat::pricing::{SweepRow, ThresholdMode};

use super::VariantArgs;
use crate::config;
use crate::errors::{CliError, CliResult};
use crate::grid::parse_grid;
use crate::output;

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Run configuration JSON file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Region 1 thresholds: comma list or start:stop:count range.
    #[arg(long, value_name = "GRID")]
    pub d1: Option<String>,
    /// Region 2 thresholds: comma list or start:stop:count range.
    #[arg(long, value_name = "GRID")]
    pub d2: Option<String>,
    /// Severity quantile levels in (0,1) setting both thresholds;
    /// cannot be combined with --d1/--d2.
    #[arg(long, value_name = "GRID")]
    pub quantiles: Option<String>,
    /// Conversion price exponents: comma list or range.
    #[arg(long, value_name = "GRID")]
    pub nu: Option<String>,
    #[command(flatten)]
    pub variants: VariantArgs,
    /// Output CSV path; defaults to sweep.csv in the output directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

pub fn run(args: SweepArgs) -> CliResult<()> {
    let mut cfg = config::load(&args.config)?;
    args.variants.apply(&mut cfg.numerics);
    let impact = config::resolve_impact(&cfg)?;

    if args.quantiles.is_some() && (args.d1.is_some() || args.d2.is_some()) {
        return Err(CliError::usage("--quantiles cannot be combined with --d1/--d2"));
    }
    let mode = match &args.quantiles {
        Some(spec) => ThresholdMode::Quantile { q: parse_grid("quantiles", spec)? },
        None => ThresholdMode::Absolute {
            d1: match &args.d1 {
                Some(spec) => parse_grid("d1", spec)?,
                None => vec![cfg.thresholds.d1],
            },
            d2: match &args.d2 {
                Some(spec) => parse_grid("d2", spec)?,
                None => vec![cfg.thresholds.d2],
            },
        },
    };
    let nus = match &args.nu {
        Some(spec) => parse_grid("nu", spec)?,
        None => vec![cfg.covenant.nu],
    };

    let rows =
        cococat::sweep(&cfg.covenant, &cfg.market, &cfg.model, &impact, &mode, &nus, &cfg.numerics)?;

    let csv = render_csv(&rows);
    let path = output::resolve_out(args.out.clone(), cfg.output_dir.as_deref(), "sweep.csv");
    output::write_file(&path, &csv)?;

    println!("wrote {} rows to {}", rows.len(), path.display());
    print_extremes(&rows);
    for line in monotonicity_lines(&rows) {
        println!("{line}");
    }
    Ok(())
}

fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("d1,d2,nu,q,coupon_leg,conversion_leg,principal_leg,total\n");
    for r in rows {
        let q = r.q.map(|q| q.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.d1, r.d2, r.nu, q, r.coupon_leg, r.conversion_leg, r.principal_leg, r.total
        ));
    }
    out
}

fn print_extremes(rows: &[SweepRow]) {
    let describe = |r: &SweepRow| match r.q {
        Some(q) => format!("{:.6} at q={} nu={}", r.total, q, r.nu),
        None => format!("{:.6} at d1={} d2={} nu={}", r.total, r.d1, r.d2, r.nu),
    };
    if let Some(min) = rows.iter().min_by(|a, b| a.total.total_cmp(&b.total)) {
        println!("total min {}", describe(min));
    }
    if let Some(max) = rows.iter().max_by(|a, b| a.total.total_cmp(&b.total)) {
        println!("total max {}", describe(max));
    }
}

/// How often the total fails to move the expected way along one grid
/// axis, holding the other axes fixed.
struct Verdict {
    slices: usize,
    violations: usize,
    worst: f64,
}

/// Groups rows by `key`, orders each group by `axis`, and counts
/// adjacent pairs that move against the expected direction by more than
/// a relative rounding allowance.
fn direction_verdict(
    rows: &[SweepRow],
    key: impl Fn(&SweepRow) -> (u64, u64, u64),
    axis: impl Fn(&SweepRow) -> f64,
    nondecreasing: bool,
) -> Verdict {
    let mut groups: HashMap<(u64, u64, u64), Vec<(f64, f64)>> = HashMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push((axis(r), r.total));
    }
    let mut verdict = Verdict { slices: 0, violations: 0, worst: 0.0 };
    for points in groups.values_mut() {
        if points.len() < 2 {
            continue;
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        verdict.slices += 1;
        for pair in points.windows(2) {
            let (prev, next) = (pair[0].1, pair[1].1);
            let tol = 1e-9 * prev.abs().max(1.0);
            let drop = if nondecreasing { prev - next } else { next - prev };
            if drop > tol {
                verdict.violations += 1;
                verdict.worst = verdict.worst.max(drop);
            }
        }
    }
    verdict
}

fn verdict_line(label: &str, verdict: &Verdict) -> String {
    if verdict.slices == 0 {
        format!("total {label}: not applicable (single point)")
    } else if verdict.violations == 0 {
        format!("total {label}: ok ({} slices)", verdict.slices)
    } else {
        format!(
            "total {label}: {} violations in {} slices (worst {:.3e})",
            verdict.violations, verdict.slices, verdict.worst
        )
    }
}

fn monotonicity_lines(rows: &[SweepRow]) -> Vec<String> {
    let quantile_mode = rows.iter().any(|r| r.q.is_some());
    let q_bits = |r: &SweepRow| r.q.map_or(u64::MAX, f64::to_bits);
    let mut lines = Vec::new();
    if quantile_mode {
        let v = direction_verdict(
            rows,
            |r| (r.nu.to_bits(), 0, 0),
            |r| r.q.unwrap_or(0.0),
            true,
        );
        lines.push(verdict_line("nondecreasing in q", &v));
    } else {
        let v = direction_verdict(
            rows,
            |r| (r.d2.to_bits(), r.nu.to_bits(), q_bits(r)),
            |r| r.d1,
            true,
        );
        lines.push(verdict_line("nondecreasing in d1", &v));
        let v = direction_verdict(
            rows,
            |r| (r.d1.to_bits(), r.nu.to_bits(), q_bits(r)),
            |r| r.d2,
            true,
        );
        lines.push(verdict_line("nondecreasing in d2", &v));
    }
    let v = direction_verdict(
        rows,
        |r| (r.d1.to_bits(), r.d2.to_bits(), q_bits(r)),
        |r| r.nu,
        false,
    );
    lines.push(verdict_line("nonincreasing in nu", &v));
    lines
}
