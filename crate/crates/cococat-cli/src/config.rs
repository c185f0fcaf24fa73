//! Run configuration file: a versioned JSON document that fully
//! determines a pricing run. Unknown keys are rejected everywhere so a
//! typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cococat::calibration::impact_coefficients;
use cococat::pricing::{Covenant, MarketParams, NumericsConfig};
use cococat::term_structure::RateParams;
use cococat::{Impact, LossModel};

use crate::errors::{CliError, CliResult};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Conversion trigger thresholds per region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub d1: f64,
    pub d2: f64,
}

/// One complete pricing problem: contract, market, loss model, equity
/// impact (explicit or derived from a loss-effect delta), thresholds,
/// and numerical settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub covenant: Covenant,
    pub market: MarketParams,
    pub model: LossModel,
    /// Explicit equity impact coefficients; give this or `delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact: Option<Impact>,
    /// Loss-effect parameter from which impact coefficients are derived
    /// when `impact` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub simulation: cococat::mc::SimulationConfig,
    /// Directory for output files when no explicit path is given;
    /// the COCOCAT_OUT_DIR environment variable is the next fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Reads and fully validates a configuration file. Read failures exit
/// as I/O errors; malformed or out-of-schema content exits as a
/// configuration error before any computation starts.
pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    validate(&config).map_err(|e| CliError {
        code: e.code,
        message: format!("config {}: {}", path.display(), e.message),
    })?;
    Ok(config)
}

/// Checks every section of a configuration, including the impact/delta
/// exclusivity rule and threshold positivity.
pub fn validate(config: &RunConfig) -> CliResult<()> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::usage(format!(
            "unsupported schema_version {}; this build reads version {SCHEMA_VERSION}",
            config.schema_version
        )));
    }
    config.covenant.validate().map_err(|e| CliError::usage(e.to_string()))?;
    config.market.validate().map_err(|e| CliError::usage(e.to_string()))?;
    config.model.validate().map_err(|e| CliError::usage(e.to_string()))?;
    config.numerics.validate().map_err(|e| CliError::usage(e.to_string()))?;
    config.simulation.validate().map_err(|e| CliError::usage(e.to_string()))?;
    match (&config.impact, config.delta) {
        (Some(impact), None) => impact.validate().map_err(|e| CliError::usage(e.to_string()))?,
        (None, Some(delta)) => {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(CliError::usage(format!("delta must be positive, got {delta}")));
            }
        }
        (Some(_), Some(_)) => {
            return Err(CliError::usage("give either impact or delta, not both"));
        }
        (None, None) => {
            return Err(CliError::usage("one of impact or delta is required"));
        }
    }
    for (value, name) in [(config.thresholds.d1, "d1"), (config.thresholds.d2, "d2")] {
        if !(value.is_finite() && value > 0.0) {
            return Err(CliError::usage(format!(
                "threshold {name} must be finite and positive, got {value}"
            )));
        }
    }
    Ok(())
}

/// The impact coefficients for a validated configuration: explicit ones
/// verbatim, otherwise derived from delta and the loss model.
pub fn resolve_impact(config: &RunConfig) -> CliResult<Impact> {
    match (&config.impact, config.delta) {
        (Some(impact), None) => Ok(*impact),
        (None, Some(delta)) => {
            impact_coefficients(delta, &config.model).map_err(|e| CliError::usage(e.to_string()))
        }
        _ => Err(CliError::usage("one of impact or delta is required")),
    }
}

/// Example contract terms used when calibration emits a configuration
/// without a template: a five-year quarterly floater on a unit face with
/// a 10% spread converting a tenth of the face at the square root of the
/// share price.
pub fn example_covenant() -> Covenant {
    Covenant {
        face: 1.0,
        maturity: 5.0,
        tenor: 0.25,
        spread: 0.10,
        conversion_fraction: 0.1,
        nu: 0.5,
    }
}

/// Example market environment matching [`example_covenant`].
pub fn example_market() -> MarketParams {
    MarketParams {
        r0: 0.02,
        rate: RateParams { theta: 0.2, m: RateParams::implied_m(0.2, 0.03), sigma: 0.03 },
        s0: 10.0,
        sigma_s: 0.2,
        rho: -0.5,
        initial_reference_rate: None,
    }
}
