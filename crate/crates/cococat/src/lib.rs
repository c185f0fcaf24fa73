//! Valuation of contingent convertible catastrophe (CoCoCat) bonds whose
//! conversion is triggered by catastrophe losses in two (or more) regions.
//!
//! The instrument pays floating coupons plus a spread until either region's
//! cumulative catastrophe loss crosses its threshold; at the first crossing
//! the face value converts to equity at a fraction of the prevailing share
//! price, and if no crossing happens before maturity the face value is
//! repaid. Catastrophe losses follow compound Poisson processes under one
//! of three dependence structures between the regions:
//!
//! - independent loss processes (separate event streams per region),
//! - common event stream with independent per-region severities,
//! - common event stream with a total severity split proportionally.
//!
//! Share prices react to losses through exponential impact factors, the
//! short rate follows a square-root-of-affine dynamic with an exact
//! zero-coupon bond formula, and the price of each leg of the bond has a
//! closed form built from exponentially tilted trigger-time laws. A Monte
//! Carlo engine simulates the same dynamics for verification, and a
//! calibration module fits event intensities, severity families, and
//! impact coefficients from loss records.

pub mod calibration;
pub mod convolution;
pub mod distributions;
pub mod error;
pub mod loss_models;
pub mod mc;
pub mod pricing;
pub mod quad;
pub mod term_structure;
pub mod trigger;

pub use distributions::Severity;
pub use error::{Error, Result};
pub use loss_models::{CompoundPoisson, Impact, Kappa, LossModel, Proportion};
pub use pricing::{
    price, price_multi_region, sweep, Covenant, CouponVariant, ExponentVariant, MarketParams,
    NumericsConfig, PriceBreakdown, Region, RegionMode, SweepRow, ThresholdMode,
};
pub use term_structure::RateParams;
pub use trigger::{trigger_law, TiltSpec, TriggerLaw};
