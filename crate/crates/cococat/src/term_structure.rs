//! Zero-coupon bond prices for a short rate that is the square of a
//! Brownian motion with constant drift.
//!
//! The state is y with dy = -(theta/2) dt + (sigma/2) dW and the short
//! rate is r = y^2, started from y0 = sqrt(r0). Bond prices have the
//! closed form P = exp(ln A(T) + B(T) y^2 + C(T) y) with
//!
//!   ln A(T) = -ln(cosh g)/2 - (theta^2 / (2 sigma^2)) (T - sqrt(2)/sigma * tanh g)
//!   B(T)    = -(sqrt(2)/sigma) tanh g
//!   C(T)    = (2 theta / sigma^2) (1 - sech g)
//!
//! where g = sigma T / sqrt(2). The implementation evaluates these in
//! forms that stay accurate for small g, so P(r0, 0) = 1 holds exactly.
//! The drift-level parameter `m` is implied by the diffusion and does not
//! enter prices; it is carried so that measure changes can report the
//! transformed parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Result};

/// Short-rate dynamics parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    /// Drift strength: the state y drains at rate theta/2.
    pub theta: f64,
    /// Drift level implied by the diffusion; reported but not priced.
    pub m: f64,
    /// Volatility of the short rate; the state y diffuses at sigma/2.
    pub sigma: f64,
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(invalid(format!("rate drift theta must be finite, got {}", self.theta)));
        }
        require_positive(self.sigma, "rate volatility sigma")?;
        if !self.m.is_finite() {
            return Err(invalid(format!("rate drift level m must be finite, got {}", self.m)));
        }
        Ok(())
    }

    /// The drift level consistent with the bond-pricing dynamics for a
    /// given theta and sigma.
    pub fn implied_m(theta: f64, sigma: f64) -> f64 {
        sigma * sigma / (4.0 * theta)
    }
}

/// Exponents of the bond price: P = exp(ln_a + b y^2 + c y).
#[derive(Debug, Clone, Copy)]
pub struct BondCoefficients {
    pub ln_a: f64,
    pub b: f64,
    pub c: f64,
}

/// g - tanh(g), evaluated by series for small g to avoid cancellation.
fn g_minus_tanh(g: f64) -> f64 {
    let a = g.abs();
    if a < 0.05 {
        let g2 = g * g;
        g * g2 * (1.0 / 3.0 - g2 * (2.0 / 15.0 - g2 * (17.0 / 315.0 - g2 * (62.0 / 2835.0))))
    } else {
        g - g.tanh()
    }
}

/// 1 - sech(g) in a cancellation-free form.
fn one_minus_sech(g: f64) -> f64 {
    let s = (0.5 * g).sinh();
    2.0 * s * s / g.cosh()
}

/// ln cosh(g), stable for large arguments.
fn ln_cosh(g: f64) -> f64 {
    let a = g.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Maturity-dependent coefficients of the bond price exponent.
pub fn bond_coefficients(t: f64, params: &RateParams) -> Result<BondCoefficients> {
    params.validate()?;
    require_nonnegative(t, "maturity")?;
    if t > 200.0 {
        return Err(invalid(format!("maturity {t} exceeds the supported range")));
    }
    let RateParams { theta, sigma, .. } = *params;
    let g = sigma * t / std::f64::consts::SQRT_2;
    let sqrt2_over_sigma = std::f64::consts::SQRT_2 / sigma;
    let ln_a = -0.5 * ln_cosh(g)
        - (theta * theta / (2.0 * sigma * sigma)) * sqrt2_over_sigma * g_minus_tanh(g);
    let b = -sqrt2_over_sigma * g.tanh();
    let c = (2.0 * theta / (sigma * sigma)) * one_minus_sech(g);
    Ok(BondCoefficients { ln_a, b, c })
}

/// Zero-coupon bond price P(r0, t) for an initial short rate r0 >= 0.
pub fn zcb_price(r0: f64, t: f64, params: &RateParams) -> Result<f64> {
    require_nonnegative(r0, "initial short rate")?;
    Ok(zcb_price_state(r0.sqrt(), t, params)?)
}

/// Bond price as a function of the signed state y (y^2 is the short
/// rate). Paths of y can cross zero, and the price depends on the sign.
pub fn zcb_price_state(y: f64, t: f64, params: &RateParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(invalid(format!("rate state must be finite, got {y}")));
    }
    let co = bond_coefficients(t, params)?;
    Ok((co.ln_a + co.b * y * y + co.c * y).exp())
}

/// Parameters of the rate dynamics under the equity-conversion measure
/// with retention exponent nu in (0, 1]. The state is scaled by sqrt(nu),
/// so the transformed initial rate is nu * r0.
pub fn tilted_rate_params(
    params: &RateParams,
    sigma_s: f64,
    rho: f64,
    nu: f64,
) -> Result<RateParams> {
    params.validate()?;
    require_nonnegative(sigma_s, "equity volatility")?;
    if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
        return Err(invalid(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    if !(nu.is_finite() && nu > 0.0 && nu <= 1.0) {
        return Err(invalid(format!(
            "retention exponent for the tilted dynamics must lie in (0, 1], got {nu}"
        )));
    }
    let root_nu = nu.sqrt();
    let theta_bar = root_nu * (params.theta - params.sigma * sigma_s * rho * (1.0 - nu));
    let m_bar = if theta_bar == 0.0 {
        0.0
    } else {
        nu * params.m * params.theta / theta_bar
    };
    Ok(RateParams { theta: theta_bar, m: m_bar, sigma: root_nu * params.sigma })
}
