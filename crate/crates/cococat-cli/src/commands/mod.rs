//! One module per subcommand, plus the formula-variant flags shared by
//! the pricing commands.

pub mod calibrate;
pub mod price;
pub mod simulate;
pub mod sweep;
pub mod validate;

use clap::{Args, ValueEnum};

use cococat::pricing::{CouponVariant, ExponentVariant, NumericsConfig};

/// Formula-variant overrides for the two disputed closed-form terms.
#[derive(Debug, Clone, Copy, Args)]
pub struct VariantArgs {
    /// Coupon-leg sign variant, overriding the config.
    #[arg(long, value_enum, value_name = "SIGN")]
    pub variant_coupon: Option<CouponVariantArg>,
    /// Conversion-leg time-exponent variant, overriding the config.
    #[arg(long, value_enum, value_name = "POWER")]
    pub variant_exponent: Option<ExponentVariantArg>,
}

impl VariantArgs {
    pub fn apply(&self, numerics: &mut NumericsConfig) {
        if let Some(v) = self.variant_coupon {
            numerics.coupon_variant = v.into();
        }
        if let Some(v) = self.variant_exponent {
            numerics.exponent_variant = v.into();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouponVariantArg {
    /// Sum form of the adjacent zero-coupon bond combination.
    Plus,
    /// Difference form of the adjacent zero-coupon bond combination.
    Minus,
}

impl From<CouponVariantArg> for CouponVariant {
    fn from(arg: CouponVariantArg) -> CouponVariant {
        match arg {
            CouponVariantArg::Plus => CouponVariant::Plus,
            CouponVariantArg::Minus => CouponVariant::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExponentVariantArg {
    /// Drift correction -nu (1 - nu) sigma_s^2 t / 2.
    Linear,
    /// Drift correction -nu (1 - nu)^2 sigma_s^2 t / 2.
    Squared,
}

impl From<ExponentVariantArg> for ExponentVariant {
    fn from(arg: ExponentVariantArg) -> ExponentVariant {
        match arg {
            ExponentVariantArg::Linear => ExponentVariant::Linear,
            ExponentVariantArg::Squared => ExponentVariant::Squared,
        }
    }
}
