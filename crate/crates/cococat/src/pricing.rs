//! Closed-form valuation of the contingent convertible catastrophe bond.
//!
//! The bond value splits into three legs, each priced against the law of
//! the trigger time:
//!
//! - coupons: floating reference rate plus spread, paid on a fixed tenor
//!   while no trigger has happened. Rate-trigger independence turns each
//!   coupon into zero-coupon bond prices times a survival probability.
//! - conversion: at the trigger the holder receives a fraction of face
//!   value worth of shares at a conversion price equal to the prevailing
//!   share price raised to an exponent nu. The expectation factorizes
//!   into the share's loss impact (absorbed by exponentially tilting the
//!   loss model), a drift correction, and a zero-coupon bond price under
//!   transformed rate dynamics with initial rate nu * r0, integrated
//!   against the tilted trigger density.
//! - principal: face value at maturity if no trigger happened.
//!
//! Two formula variants are kept side by side where independent
//! derivations disagreed, selectable through [`NumericsConfig`]; the
//! defaults are the variants confirmed by simulation, and the validation
//! suite re-adjudicates both switches.

use serde::{Deserialize, Serialize};

use crate::distributions::Severity;
use crate::error::{invalid, require_in_range, require_positive, tolerance, Result};
use crate::loss_models::{compensator_rate, kappa, Impact, LossModel};
use crate::quad;
use crate::term_structure::{tilted_rate_params, zcb_price, RateParams};
use crate::trigger::{trigger_law, LawKind, SingleLaw, TiltSpec, TriggerLaw};

/// Sign used when combining consecutive discount factors in the coupon
/// leg. `Minus` prices the floating coupon as the difference of adjacent
/// zero-coupon bonds; `Plus` uses the sum form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouponVariant {
    Plus,
    Minus,
}

/// Power of the retained fraction (1 - nu) in the conversion leg's drift
/// correction exponent: `Linear` uses -nu (1 - nu) sigma_s^2 t / 2,
/// `Squared` uses -nu (1 - nu)^2 sigma_s^2 t / 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentVariant {
    Linear,
    Squared,
}

/// Tunable numerical parameters and formula-variant switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Cells in the severity convolution grid (power of two).
    pub grid_points: usize,
    /// Severity mass tolerated by convolution shortcut bounds.
    pub grid_tail: f64,
    /// Poisson mass allowed beyond the truncated fold count.
    pub poisson_tail: f64,
    /// Gauss-Legendre nodes for expectations over a beta split.
    pub proportion_nodes: usize,
    /// Gauss-Legendre nodes for the conversion time integral; the
    /// integral is repeated at twice this count as an accuracy check.
    pub time_nodes: usize,
    /// Largest relative change tolerated when the conversion integral's
    /// node count is doubled.
    pub integral_check_tol: f64,
    pub coupon_variant: CouponVariant,
    pub exponent_variant: ExponentVariant,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            grid_points: 1 << 14,
            grid_tail: 1e-10,
            poisson_tail: 1e-12,
            proportion_nodes: 64,
            time_nodes: 200,
            integral_check_tol: 1e-7,
            coupon_variant: CouponVariant::Minus,
            exponent_variant: ExponentVariant::Linear,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.grid_points.is_power_of_two() || self.grid_points < 1 << 8 {
            return Err(invalid(format!(
                "grid_points must be a power of two of at least 256, got {}",
                self.grid_points
            )));
        }
        if !(self.grid_tail > 0.0 && self.grid_tail < 1e-3) {
            return Err(invalid(format!("grid_tail out of range: {}", self.grid_tail)));
        }
        if !(self.poisson_tail > 0.0 && self.poisson_tail < 1e-3) {
            return Err(invalid(format!("poisson_tail out of range: {}", self.poisson_tail)));
        }
        if self.proportion_nodes < 1 || self.proportion_nodes > 1024 {
            return Err(invalid(format!(
                "proportion_nodes out of range: {}",
                self.proportion_nodes
            )));
        }
        if self.time_nodes < 8 || self.time_nodes > 4000 {
            return Err(invalid(format!("time_nodes out of range: {}", self.time_nodes)));
        }
        if !(self.integral_check_tol > 0.0 && self.integral_check_tol < 1e-2) {
            return Err(invalid(format!(
                "integral_check_tol out of range: {}",
                self.integral_check_tol
            )));
        }
        Ok(())
    }
}

/// Contract terms of the bond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Covenant {
    /// Face value.
    pub face: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Coupon tenor in years; must divide the maturity evenly.
    pub tenor: f64,
    /// Fixed spread over the floating reference rate.
    pub spread: f64,
    /// Fraction of face value converted to equity at the trigger.
    pub conversion_fraction: f64,
    /// Conversion price exponent: conversion happens at the share price
    /// raised to nu, so nu = 1 converts at market price and nu = 0 at a
    /// unit price.
    pub nu: f64,
}

impl Covenant {
    pub fn validate(&self) -> Result<()> {
        require_positive(self.face, "face value")?;
        require_positive(self.maturity, "maturity")?;
        if self.maturity > 100.0 {
            return Err(invalid(format!("maturity too large: {}", self.maturity)));
        }
        require_positive(self.tenor, "tenor")?;
        require_in_range(self.spread, 0.0, 10.0, "coupon spread")?;
        require_in_range(self.conversion_fraction, 0.0, 1.0, "conversion fraction")?;
        require_in_range(self.nu, 0.0, 1.0, "conversion price exponent nu")?;
        let n = self.coupon_count()?;
        if n == 0 || n > 10_000 {
            return Err(invalid(format!("coupon count out of range: {n}")));
        }
        Ok(())
    }

    /// Number of coupon dates implied by maturity and tenor.
    pub fn coupon_count(&self) -> Result<usize> {
        let ratio = self.maturity / self.tenor;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!(
                "tenor {} does not divide maturity {} into whole periods",
                self.tenor, self.maturity
            )));
        }
        Ok(n as usize)
    }
}

/// Market environment: rates, equity, and their correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Initial short rate.
    pub r0: f64,
    pub rate: RateParams,
    /// Initial share price.
    pub s0: f64,
    /// Equity volatility.
    pub sigma_s: f64,
    /// Correlation between the rate and equity Brownian drivers.
    pub rho: f64,
    /// Overrides the first coupon's already-fixed reference rate; when
    /// absent it is implied from the initial discount curve.
    #[serde(default)]
    pub initial_reference_rate: Option<f64>,
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        require_in_range(self.r0, 0.0, 1.0, "initial short rate")?;
        self.rate.validate()?;
        require_positive(self.rate.theta, "rate drift theta")?;
        require_positive(self.s0, "initial share price")?;
        require_in_range(self.sigma_s, 0.0, 5.0, "equity volatility")?;
        require_in_range(self.rho, -1.0, 1.0, "rate-equity correlation")?;
        if let Some(r) = self.initial_reference_rate {
            require_in_range(r, -0.5, 1.0, "initial reference rate")?;
        }
        Ok(())
    }

    /// Reference rate fixed at time zero for the first coupon: either the
    /// explicit override or the simply compounded rate implied by the
    /// discount curve over one tenor.
    pub fn reference_rate(&self, tenor: f64) -> Result<f64> {
        if let Some(r) = self.initial_reference_rate {
            return Ok(r);
        }
        let p = zcb_price(self.r0, tenor, &self.rate)?;
        Ok((1.0 / p - 1.0) / tenor)
    }
}

/// Value of the bond split by leg.
#[derive(Debug, Clone, Serialize)]
pub struct PriceBreakdown {
    pub coupon_leg: f64,
    pub conversion_leg: f64,
    pub principal_leg: f64,
    pub total: f64,
    pub diagnostics: Diagnostics,
}

/// Details of how a price was computed.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Reference rate applied to the first coupon.
    pub initial_reference_rate: f64,
    pub coupon_variant: CouponVariant,
    pub exponent_variant: ExponentVariant,
    /// Nodes used by the converged conversion integral.
    pub conversion_nodes: usize,
    /// Relative change observed when doubling the conversion nodes.
    pub conversion_refinement_change: f64,
    /// Probability that the bond survives to maturity untriggered.
    pub survival_at_maturity: f64,
}

/// Prices the bond for thresholds (d1, d2).
pub fn price(
    covenant: &Covenant,
    market: &MarketParams,
    model: &LossModel,
    impact: &Impact,
    d1: f64,
    d2: f64,
    num: &NumericsConfig,
) -> Result<PriceBreakdown> {
    covenant.validate()?;
    market.validate()?;
    impact.validate()?;
    num.validate()?;
    let base = trigger_law(model, d1, d2, covenant.maturity, None, num)?;
    price_given_base(covenant, market, model, impact, d1, d2, &base, num)
}

/// Pricing with a prebuilt base trigger law (reused across sweeps where
/// only the conversion exponent changes).
fn price_given_base(
    covenant: &Covenant,
    market: &MarketParams,
    model: &LossModel,
    impact: &Impact,
    d1: f64,
    d2: f64,
    base: &TriggerLaw,
    num: &NumericsConfig,
) -> Result<PriceBreakdown> {
    let maturity = covenant.maturity;
    let survival_at_maturity = base.survival(maturity);
    let discount = |t: f64| zcb_price(market.r0, t, &market.rate);

    let reference_rate = market.reference_rate(covenant.tenor)?;
    let coupon_leg = coupon_leg(covenant, market, &|t| base.survival(t), reference_rate, num)?;
    let principal_leg = covenant.face * discount(maturity)? * survival_at_maturity;

    let (conversion_leg, nodes_used, refinement) =
        conversion_leg(covenant, market, model, impact, d1, d2, num)?;

    let total = coupon_leg + conversion_leg + principal_leg;
    Ok(PriceBreakdown {
        coupon_leg,
        conversion_leg,
        principal_leg,
        total,
        diagnostics: Diagnostics {
            initial_reference_rate: reference_rate,
            coupon_variant: num.coupon_variant,
            exponent_variant: num.exponent_variant,
            conversion_nodes: nodes_used,
            conversion_refinement_change: refinement,
            survival_at_maturity,
        },
    })
}

/// Present value of the floating-plus-spread coupons gated by survival.
fn coupon_leg(
    covenant: &Covenant,
    market: &MarketParams,
    survival: &dyn Fn(f64) -> f64,
    reference_rate: f64,
    num: &NumericsConfig,
) -> Result<f64> {
    let n = covenant.coupon_count()?;
    let tenor = covenant.tenor;
    let face = covenant.face;
    let spread = covenant.spread;

    let p_first = zcb_price(market.r0, tenor, &market.rate)?;
    let mut leg = face * tenor * (reference_rate + spread) * p_first * survival(tenor);

    let mut p_prev = p_first;
    for i in 2..=n {
        let t_i = tenor * i as f64;
        let p_i = zcb_price(market.r0, t_i, &market.rate)?;
        let weight = match num.coupon_variant {
            CouponVariant::Minus => p_prev - (1.0 - spread * tenor) * p_i,
            CouponVariant::Plus => p_prev + (1.0 - spread * tenor) * p_i,
        };
        leg += face * survival(t_i) * weight;
        p_prev = p_i;
    }
    Ok(leg)
}

/// Conversion-measure ingredients shared by the two- and multi-region
/// paths: drift correction exponent and the tilted discount curve.
struct ConversionDiscount {
    eta: f64,
    tilted_r0: f64,
    tilted_rate: Option<RateParams>,
}

impl ConversionDiscount {
    fn build(market: &MarketParams, nu: f64, variant: ExponentVariant) -> Result<Self> {
        let retained = 1.0 - nu;
        let eta = match variant {
            ExponentVariant::Linear => -0.5 * nu * retained * market.sigma_s * market.sigma_s,
            ExponentVariant::Squared => {
                -0.5 * nu * retained * retained * market.sigma_s * market.sigma_s
            }
        };
        let tilted_rate = if nu > 0.0 {
            Some(tilted_rate_params(&market.rate, market.sigma_s, market.rho, nu)?)
        } else {
            None
        };
        Ok(ConversionDiscount { eta, tilted_r0: nu * market.r0, tilted_rate })
    }

    /// exp(eta t) times the transformed-dynamics bond price; with nu = 0
    /// the discount degenerates to one.
    fn factor(&self, t: f64) -> Result<f64> {
        let bond = match &self.tilted_rate {
            Some(params) => zcb_price(self.tilted_r0, t, params)?,
            None => 1.0,
        };
        Ok((self.eta * t).exp() * bond)
    }
}

/// Expected discounted conversion payoff. Returns the leg value, the node
/// count that converged, and the relative change seen at the final
/// doubling.
fn conversion_leg(
    covenant: &Covenant,
    market: &MarketParams,
    model: &LossModel,
    impact: &Impact,
    d1: f64,
    d2: f64,
    num: &NumericsConfig,
) -> Result<(f64, usize, f64)> {
    if covenant.conversion_fraction == 0.0 {
        return Ok((0.0, 0, 0.0));
    }
    let nu = covenant.nu;
    let maturity = covenant.maturity;
    let tilt = TiltSpec { alpha: impact.alpha, beta: impact.beta, nu };
    let tilted = trigger_law(model, d1, d2, maturity, Some(&tilt), num)?;
    let discount = ConversionDiscount::build(market, nu, num.exponent_variant)?;

    // Per-component thinning rates of the tilt: the factor carried by the
    // conversion integrand is exp((lambda_tilted - lambda_base) t) times
    // the compensator restored at rate (1 - nu) kappa-rate.
    let kap = kappa(model, impact, num.proportion_nodes)?;
    let comp_rate = compensator_rate(model, impact, &kap)?;
    let restored = (1.0 - nu) * comp_rate;
    let base_total_intensity = match model {
        LossModel::Independent { region1, region2 } => region1.lambda + region2.lambda,
        LossModel::CommonShock { lambda, .. } | LossModel::Proportional { lambda, .. } => *lambda,
    };

    // Components: weight, exponential rate of the loss-impact factor, and
    // the conditional tilted density.
    enum Component<'a> {
        Whole(&'a TriggerLaw, f64),
        Node(&'a SingleLaw, f64, f64),
    }
    let components: Vec<Component> = match tilted.kind() {
        LawKind::ProportionalMix(nodes) => nodes
            .iter()
            .map(|node| {
                let phi_rate = (node.law.lambda - base_total_intensity) + restored;
                Component::Node(&node.law, node.weight, phi_rate)
            })
            .collect(),
        LawKind::Independent(a, b) => {
            let tilted_total = a.lambda + b.lambda;
            vec![Component::Whole(&tilted, (tilted_total - base_total_intensity) + restored)]
        }
        LawKind::CommonShock { lambda, .. } => {
            vec![Component::Whole(&tilted, (lambda - base_total_intensity) + restored)]
        }
    };

    let scale = covenant.conversion_fraction * covenant.face * market.s0.powf(1.0 - nu);
    let mut integrand = |t: f64| -> Result<f64> {
        let outer = discount.factor(t)?;
        let mut inner = 0.0;
        for comp in &components {
            inner += match comp {
                Component::Whole(law, phi_rate) => (phi_rate * t).exp() * law.density(t),
                Component::Node(law, weight, phi_rate) => {
                    weight * (phi_rate * t).exp() * law.density(t)
                }
            };
        }
        Ok(outer * inner)
    };

    let coarse = integrate_time(&mut integrand, maturity, num.time_nodes)?;
    let fine = integrate_time(&mut integrand, maturity, num.time_nodes * 2)?;
    let change = (fine - coarse).abs();
    let tolerance_band = (num.integral_check_tol * fine.abs()).max(1e-16);
    if change > tolerance_band {
        return Err(tolerance(format!(
            "conversion integral did not settle: {coarse} vs {fine} at {} nodes",
            num.time_nodes * 2
        )));
    }
    let rel_change = if fine != 0.0 { change / fine.abs() } else { 0.0 };
    Ok((scale * fine, num.time_nodes * 2, rel_change))
}

fn integrate_time<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    maturity: f64,
    nodes: usize,
) -> Result<f64> {
    let rule = quad::legendre(nodes);
    let mut acc = 0.0;
    for (t, w) in rule.nodes_on(0.0, maturity) {
        acc += w * f(t)?;
    }
    Ok(acc)
}

/// One region of the generalized bond: its own event stream intensity (or
/// the shared one), severity, threshold, and equity impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lambda: f64,
    pub severity: Severity,
    pub threshold: f64,
    pub impact: f64,
}

/// Dependence structure for the multi-region generalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Each region has its own independent event stream.
    Independent,
    /// All regions share one event stream; intensities must agree.
    CommonShock,
}

/// Multi-region trigger survival/density evaluator.
enum MultiLaw {
    Independent(Vec<SingleLaw>),
    CommonShock { lambda: f64, folds: Vec<Vec<f64>> },
}

impl MultiLaw {
    fn survival(&self, t: f64) -> f64 {
        match self {
            MultiLaw::Independent(laws) => laws.iter().map(|l| l.survival(t)).product(),
            MultiLaw::CommonShock { lambda, folds } => {
                let mean = lambda * t;
                let mut w = (-mean).exp();
                let mut acc = 0.0;
                let len = folds.iter().map(Vec::len).min().unwrap_or(0);
                for n in 0..len {
                    let prod: f64 = folds.iter().map(|f| f[n]).product();
                    acc += w * prod;
                    w *= mean / (n as f64 + 1.0);
                }
                acc.min(1.0)
            }
        }
    }

    fn density(&self, t: f64) -> f64 {
        match self {
            MultiLaw::Independent(laws) => {
                let survivals: Vec<f64> = laws.iter().map(|l| l.survival(t)).collect();
                let all: f64 = survivals.iter().product();
                let mut acc = 0.0;
                for (i, law) in laws.iter().enumerate() {
                    let others = if survivals[i] > 0.0 {
                        all / survivals[i]
                    } else {
                        survivals
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, s)| s)
                            .product()
                    };
                    acc += law.density(t) * others;
                }
                acc
            }
            MultiLaw::CommonShock { lambda, folds } => {
                let mean = lambda * t;
                let mut w = (-mean).exp();
                let mut acc = 0.0;
                let len = folds.iter().map(Vec::len).min().unwrap_or(0);
                for n in 0..len.saturating_sub(1) {
                    let now: f64 = folds.iter().map(|f| f[n]).product();
                    let next: f64 = folds.iter().map(|f| f[n + 1]).product();
                    acc += w * (now - next).max(0.0);
                    w *= mean / (n as f64 + 1.0);
                }
                lambda * acc
            }
        }
    }
}

fn build_multi_law(
    regions: &[Region],
    mode: RegionMode,
    nu_tilt: Option<f64>,
    horizon: f64,
    num: &NumericsConfig,
) -> Result<MultiLaw> {
    match mode {
        RegionMode::Independent => {
            let mut laws = Vec::with_capacity(regions.len());
            for region in regions {
                let (lam, sev) = match nu_tilt {
                    Some(nu) => {
                        let theta = region.impact * (1.0 - nu);
                        (
                            region.lambda * region.severity.laplace(theta)?,
                            region.severity.exp_tilt(theta)?,
                        )
                    }
                    None => (region.lambda, region.severity.clone()),
                };
                laws.push(SingleLaw::build(lam, &sev, region.threshold, horizon, num)?);
            }
            Ok(MultiLaw::Independent(laws))
        }
        RegionMode::CommonShock => {
            let lambda = regions[0].lambda;
            let mut lam = lambda;
            let mut severities = Vec::with_capacity(regions.len());
            for region in regions {
                match nu_tilt {
                    Some(nu) => {
                        let theta = region.impact * (1.0 - nu);
                        lam *= region.severity.laplace(theta)?;
                        severities.push(region.severity.exp_tilt(theta)?);
                    }
                    None => severities.push(region.severity.clone()),
                }
            }
            let weights = crate::convolution::poisson_weights(lam * horizon, num.poisson_tail)?;
            let mut folds = Vec::with_capacity(regions.len());
            for (region, sev) in regions.iter().zip(&severities) {
                folds.push(crate::convolution::nfold_cdf_table(
                    sev,
                    region.threshold,
                    weights.len(),
                    num.grid_points,
                    num.grid_tail,
                )?);
            }
            Ok(MultiLaw::CommonShock { lambda: lam, folds })
        }
    }
}

/// Prices the bond written on any number of regions. With two regions
/// this reproduces [`price`] for the corresponding dependence structure;
/// with one region both modes coincide.
pub fn price_multi_region(
    covenant: &Covenant,
    market: &MarketParams,
    regions: &[Region],
    mode: RegionMode,
    num: &NumericsConfig,
) -> Result<PriceBreakdown> {
    covenant.validate()?;
    market.validate()?;
    num.validate()?;
    if regions.is_empty() {
        return Err(invalid("at least one region is required"));
    }
    for region in regions {
        require_positive(region.lambda, "region intensity")?;
        require_positive(region.threshold, "region threshold")?;
        require_positive(region.impact, "region impact")?;
        region.severity.validate()?;
    }
    if mode == RegionMode::CommonShock {
        let lambda = regions[0].lambda;
        for region in regions {
            if (region.lambda - lambda).abs() > 1e-12 * lambda.max(1.0) {
                return Err(invalid(
                    "a common event stream requires identical intensities across regions",
                ));
            }
        }
    }

    let maturity = covenant.maturity;
    let base = build_multi_law(regions, mode, None, maturity, num)?;
    let survival_at_maturity = base.survival(maturity);

    let reference_rate = market.reference_rate(covenant.tenor)?;
    let coupon = coupon_leg(covenant, market, &|t| base.survival(t), reference_rate, num)?;
    let principal = covenant.face * zcb_price(market.r0, maturity, &market.rate)? * survival_at_maturity;

    let (conversion, nodes_used, refinement) = if covenant.conversion_fraction == 0.0 {
        (0.0, 0, 0.0)
    } else {
        let nu = covenant.nu;
        let tilted = build_multi_law(regions, mode, Some(nu), maturity, num)?;
        let discount = ConversionDiscount::build(market, nu, num.exponent_variant)?;

        // Thinning deficit and restored compensator for the generalized
        // impact factor exp(-sum_r impact_r * L_r).
        let mut deficit = 0.0;
        let mut comp_rate = 0.0;
        match mode {
            RegionMode::Independent => {
                for region in regions {
                    let theta = region.impact * (1.0 - nu);
                    deficit += region.lambda * (1.0 - region.severity.laplace(theta)?);
                    comp_rate += region.lambda * (1.0 - region.severity.laplace(region.impact)?);
                }
            }
            RegionMode::CommonShock => {
                let lambda = regions[0].lambda;
                let mut tilted_prod = 1.0;
                let mut full_prod = 1.0;
                for region in regions {
                    tilted_prod *= region.severity.laplace(region.impact * (1.0 - nu))?;
                    full_prod *= region.severity.laplace(region.impact)?;
                }
                deficit = lambda * (1.0 - tilted_prod);
                comp_rate = lambda * (1.0 - full_prod);
            }
        }
        let phi_rate = -deficit + (1.0 - nu) * comp_rate;

        let scale = covenant.conversion_fraction * covenant.face * market.s0.powf(1.0 - nu);
        let mut integrand = |t: f64| -> Result<f64> {
            Ok(discount.factor(t)? * (phi_rate * t).exp() * tilted.density(t))
        };
        let coarse = integrate_time(&mut integrand, maturity, num.time_nodes)?;
        let fine = integrate_time(&mut integrand, maturity, num.time_nodes * 2)?;
        let change = (fine - coarse).abs();
        if change > (num.integral_check_tol * fine.abs()).max(1e-16) {
            return Err(tolerance(format!(
                "conversion integral did not settle: {coarse} vs {fine}"
            )));
        }
        let rel = if fine != 0.0 { change / fine.abs() } else { 0.0 };
        (scale * fine, num.time_nodes * 2, rel)
    };

    let total = coupon + conversion + principal;
    Ok(PriceBreakdown {
        coupon_leg: coupon,
        conversion_leg: conversion,
        principal_leg: principal,
        total,
        diagnostics: Diagnostics {
            initial_reference_rate: reference_rate,
            coupon_variant: num.coupon_variant,
            exponent_variant: num.exponent_variant,
            conversion_nodes: nodes_used,
            conversion_refinement_change: refinement,
            survival_at_maturity,
        },
    })
}

/// Threshold specification for price sweeps: explicit grids per region or
/// severity quantile levels applied to both regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdMode {
    Absolute { d1: Vec<f64>, d2: Vec<f64> },
    Quantile { q: Vec<f64> },
}

/// One sweep result row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub d1: f64,
    pub d2: f64,
    pub nu: f64,
    /// Quantile level that produced the thresholds, when applicable.
    pub q: Option<f64>,
    pub coupon_leg: f64,
    pub conversion_leg: f64,
    pub principal_leg: f64,
    pub total: f64,
}

/// Prices the bond over a grid of thresholds and conversion exponents.
/// In quantile mode the thresholds are the per-region severity quantiles
/// (the total-severity quantile for the proportional structure).
pub fn sweep(
    covenant: &Covenant,
    market: &MarketParams,
    model: &LossModel,
    impact: &Impact,
    mode: &ThresholdMode,
    nus: &[f64],
    num: &NumericsConfig,
) -> Result<Vec<SweepRow>> {
    covenant.validate()?;
    if nus.is_empty() {
        return Err(invalid("at least one conversion exponent is required"));
    }
    let pairs: Vec<(f64, f64, Option<f64>)> = match mode {
        ThresholdMode::Absolute { d1, d2 } => {
            if d1.is_empty() || d2.is_empty() {
                return Err(invalid("threshold grids must be non-empty"));
            }
            let mut out = Vec::with_capacity(d1.len() * d2.len());
            for &a in d1 {
                for &b in d2 {
                    out.push((a, b, None));
                }
            }
            out
        }
        ThresholdMode::Quantile { q } => {
            if q.is_empty() {
                return Err(invalid("quantile list must be non-empty"));
            }
            let mut out = Vec::with_capacity(q.len());
            for &level in q {
                if !(level > 0.0 && level < 1.0) {
                    return Err(invalid(format!("quantile level must lie in (0, 1), got {level}")));
                }
                let (d1, d2) = match model {
                    LossModel::Independent { region1, region2 } => (
                        region1.severity.quantile(level)?,
                        region2.severity.quantile(level)?,
                    ),
                    LossModel::CommonShock { severity1, severity2, .. } => {
                        (severity1.quantile(level)?, severity2.quantile(level)?)
                    }
                    LossModel::Proportional { severity, .. } => {
                        let d = severity.quantile(level)?;
                        (d, d)
                    }
                };
                out.push((d1, d2, Some(level)));
            }
            out
        }
    };

    let mut rows = Vec::with_capacity(pairs.len() * nus.len());
    for (d1, d2, q) in pairs {
        let base = trigger_law(model, d1, d2, covenant.maturity, None, num)?;
        for &nu in nus {
            let cov = Covenant { nu, ..covenant.clone() };
            cov.validate()?;
            let b = price_given_base(&cov, market, model, impact, d1, d2, &base, num)?;
            rows.push(SweepRow {
                d1,
                d2,
                nu,
                q,
                coupon_leg: b.coupon_leg,
                conversion_leg: b.conversion_leg,
                principal_leg: b.principal_leg,
                total: b.total,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_models::{CompoundPoisson, Proportion};
    use approx::assert_relative_eq;

    fn covenant() -> Covenant {
        Covenant {
            face: 1.0,
            maturity: 5.0,
            tenor: 0.25,
            spread: 0.10,
            conversion_fraction: 0.1,
            nu: 0.5,
        }
    }

    fn market() -> MarketParams {
        MarketParams {
            r0: 0.02,
            rate: RateParams { theta: 0.2, m: RateParams::implied_m(0.2, 0.03), sigma: 0.03 },
            s0: 10.0,
            sigma_s: 0.2,
            rho: -0.5,
            initial_reference_rate: None,
        }
    }

    fn common_shock() -> LossModel {
        LossModel::CommonShock {
            lambda: 1.4,
            severity1: Severity::LogNormal { mu: -4.564, sigma: 1.813 },
            severity2: Severity::LogNormal { mu: -2.439, sigma: 1.183 },
        }
    }

    fn impact() -> Impact {
        Impact { alpha: 0.371, beta: 0.1138 }
    }

    #[test]
    fn legs_are_positive_and_sum() {
        let b = price(&covenant(), &market(), &common_shock(), &impact(), 0.4, 0.4, &NumericsConfig::default()).unwrap();
        assert!(b.coupon_leg > 0.0);
        assert!(b.conversion_leg > 0.0);
        assert!(b.principal_leg > 0.0);
        assert_relative_eq!(b.total, b.coupon_leg + b.conversion_leg + b.principal_leg);
        // A bond paying roughly 12% coupons on unit face for five years
        // cannot be worth more than face plus undiscounted coupons.
        assert!(b.total < 1.0 + 0.13 * 5.0);
    }

    #[test]
    fn market_conversion_price_reduces_to_plain_discounted_trigger_value() {
        // With nu = 1 the conversion leg is the conversion fraction times
        // face value times the plain expected discounted trigger
        // indicator: no tilt, no drift correction, base dynamics.
        let num = NumericsConfig::default();
        let cov = Covenant { nu: 1.0, ..covenant() };
        let b = price(&cov, &market(), &common_shock(), &impact(), 0.6, 0.5, &num).unwrap();

        let base = trigger_law(&common_shock(), 0.6, 0.5, 5.0, None, &num).unwrap();
        let rule = quad::legendre(400);
        let mut expected = 0.0;
        for (t, w) in rule.nodes_on(0.0, 5.0) {
            expected += w * zcb_price(0.02, t, &market().rate).unwrap() * base.density(t);
        }
        expected *= 0.1 * 1.0;
        assert_relative_eq!(b.conversion_leg, expected, max_relative = 1e-9);
    }

    #[test]
    fn unit_conversion_price_pays_tilted_trigger_probability() {
        // With nu = 0 the holder receives the full share value at the
        // trigger. Discounting cancels against the share's rate drift,
        // the Brownian exponential is a mean-one martingale, and the loss
        // impact on the share is exactly the full exponential tilt, so
        // the leg collapses to fraction * face * s0 * P_tilted(trigger).
        let num = NumericsConfig::default();
        let cov = Covenant { nu: 0.0, ..covenant() };
        let b = price(&cov, &market(), &common_shock(), &impact(), 0.6, 0.5, &num).unwrap();
        let tilt = TiltSpec { alpha: 0.371, beta: 0.1138, nu: 0.0 };
        let tilted = trigger_law(&common_shock(), 0.6, 0.5, 5.0, Some(&tilt), &num).unwrap();
        let expected = 0.1 * 1.0 * 10.0 * (1.0 - tilted.survival(5.0));
        assert_relative_eq!(b.conversion_leg, expected, max_relative = 1e-9);
    }

    #[test]
    fn coupon_variants_differ_materially() {
        let mut num = NumericsConfig::default();
        num.coupon_variant = CouponVariant::Minus;
        let minus = price(&covenant(), &market(), &common_shock(), &impact(), 2.0, 2.0, &num).unwrap();
        num.coupon_variant = CouponVariant::Plus;
        let plus = price(&covenant(), &market(), &common_shock(), &impact(), 2.0, 2.0, &num).unwrap();
        assert!(plus.coupon_leg > minus.coupon_leg * 5.0);
        assert_relative_eq!(plus.conversion_leg, minus.conversion_leg);
        assert_relative_eq!(plus.principal_leg, minus.principal_leg);
    }

    #[test]
    fn exponent_variants_differ_at_intermediate_nu() {
        let mut num = NumericsConfig::default();
        num.exponent_variant = ExponentVariant::Linear;
        let linear = price(&covenant(), &market(), &common_shock(), &impact(), 0.4, 0.4, &num).unwrap();
        num.exponent_variant = ExponentVariant::Squared;
        let squared = price(&covenant(), &market(), &common_shock(), &impact(), 0.4, 0.4, &num).unwrap();
        assert!(linear.conversion_leg < squared.conversion_leg);
        let rel = (squared.conversion_leg - linear.conversion_leg) / linear.conversion_leg;
        assert!(rel > 1e-4, "variants too close to distinguish: {rel}");
    }

    #[test]
    fn two_region_generalization_matches_dedicated_pricers() {
        let num = NumericsConfig::default();
        let regions = [
            Region {
                lambda: 1.4,
                severity: Severity::LogNormal { mu: -4.564, sigma: 1.813 },
                threshold: 0.6,
                impact: 0.371,
            },
            Region {
                lambda: 1.4,
                severity: Severity::LogNormal { mu: -2.439, sigma: 1.183 },
                threshold: 0.5,
                impact: 0.1138,
            },
        ];
        let multi = price_multi_region(&covenant(), &market(), &regions, RegionMode::CommonShock, &num).unwrap();
        let two = price(&covenant(), &market(), &common_shock(), &impact(), 0.6, 0.5, &num).unwrap();
        assert_relative_eq!(multi.total, two.total, max_relative = 1e-9);
        assert_relative_eq!(multi.conversion_leg, two.conversion_leg, max_relative = 1e-9);

        let independent_model = LossModel::Independent {
            region1: CompoundPoisson {
                lambda: 1.4,
                severity: Severity::LogNormal { mu: -4.564, sigma: 1.813 },
            },
            region2: CompoundPoisson {
                lambda: 1.4,
                severity: Severity::LogNormal { mu: -2.439, sigma: 1.183 },
            },
        };
        let multi = price_multi_region(&covenant(), &market(), &regions, RegionMode::Independent, &num).unwrap();
        let two = price(&covenant(), &market(), &independent_model, &impact(), 0.6, 0.5, &num).unwrap();
        assert_relative_eq!(multi.total, two.total, max_relative = 1e-9);
        assert_relative_eq!(multi.conversion_leg, two.conversion_leg, max_relative = 1e-9);
    }

    #[test]
    fn single_region_modes_coincide() {
        let num = NumericsConfig::default();
        let region = [Region {
            lambda: 1.4,
            severity: Severity::LogNormal { mu: -1.477, sigma: 0.902 },
            threshold: 1.0,
            impact: 0.25,
        }];
        let a = price_multi_region(&covenant(), &market(), &region, RegionMode::Independent, &num).unwrap();
        let b = price_multi_region(&covenant(), &market(), &region, RegionMode::CommonShock, &num).unwrap();
        assert_relative_eq!(a.total, b.total, max_relative = 1e-12);
        assert_relative_eq!(a.conversion_leg, b.conversion_leg, max_relative = 1e-12);
    }

    #[test]
    fn price_increases_with_thresholds_and_decreases_with_nu() {
        let num = NumericsConfig::default();
        let model = common_shock();
        let lo = price(&covenant(), &market(), &model, &impact(), 0.4, 0.4, &num).unwrap();
        let hi = price(&covenant(), &market(), &model, &impact(), 1.2, 0.4, &num).unwrap();
        assert!(hi.total > lo.total, "raising d1 must raise the price");
        let hi2 = price(&covenant(), &market(), &model, &impact(), 0.4, 1.2, &num).unwrap();
        assert!(hi2.total > lo.total, "raising d2 must raise the price");

        let cov_lo = Covenant { nu: 0.2, ..covenant() };
        let cov_hi = Covenant { nu: 0.8, ..covenant() };
        let a = price(&cov_lo, &market(), &model, &impact(), 0.4, 0.4, &num).unwrap();
        let b = price(&cov_hi, &market(), &model, &impact(), 0.4, 0.4, &num).unwrap();
        assert!(a.total > b.total, "higher nu must not raise the price");
    }

    #[test]
    fn sweep_covers_grid_and_quantile_modes() {
        let num = NumericsConfig::default();
        let rows = sweep(
            &covenant(),
            &market(),
            &common_shock(),
            &impact(),
            &ThresholdMode::Absolute { d1: vec![0.4, 2.0], d2: vec![0.4] },
            &[0.2, 0.8],
            &num,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.q.is_none()));

        let rows = sweep(
            &covenant(),
            &market(),
            &LossModel::Proportional {
                lambda: 1.4,
                severity: Severity::LogNormal { mu: -1.477, sigma: 0.902 },
                proportion: Proportion::Fixed { p: 0.38 },
            },
            &impact(),
            &ThresholdMode::Quantile { q: vec![0.9] },
            &[0.5],
            &num,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].d1, rows[0].d2);
        assert_eq!(rows[0].q, Some(0.9));
    }

    #[test]
    fn invalid_covenants_are_rejected() {
        let mut c = covenant();
        c.tenor = 0.3;
        assert!(c.validate().is_err());
        let mut c = covenant();
        c.nu = 1.2;
        assert!(c.validate().is_err());
        let mut c = covenant();
        c.face = 0.0;
        assert!(c.validate().is_err());
        let mut m = market();
        m.rho = -2.0;
        assert!(m.validate().is_err());
    }
}
