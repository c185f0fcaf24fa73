//! Law of the trigger time: the first instant at which either region's
//! cumulative loss reaches its threshold.
//!
//! For a compound Poisson region the event count at time t is Poisson and
//! the cumulative loss stays below the threshold exactly when the n-fold
//! severity convolution does, so survival probabilities are Poisson
//! mixtures of convolution distribution functions evaluated once per fold
//! count; time only enters through the Poisson weights. Densities use the
//! same tables through the difference form
//!
//!   f(t) = lambda e^(-Lambda t) sum_n (Lambda t)^n / n! [F^(n*)(D) - F^((n+1)*)(D)]
//!
//! which is manifestly nonnegative. The three dependence structures
//! combine one or two such laws (product, common counts, or a mixture
//! over proportion splits), and an optional exponential tilt reweights
//! intensities and severities for the equity-conversion measure.

use crate::convolution::{nfold_cdf_table, poisson_weights};
use crate::distributions::Severity;
use crate::error::{invalid, require_positive, Result};
use crate::loss_models::LossModel;
use crate::pricing::NumericsConfig;

/// Tilt of the loss model induced by equity conversion: impact
/// coefficients and the retention exponent nu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSpec {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
}

impl TiltSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive(self.alpha, "impact alpha")?;
        require_positive(self.beta, "impact beta")?;
        if !(self.nu.is_finite() && (0.0..=1.0).contains(&self.nu)) {
            return Err(invalid(format!(
                "retention exponent must lie in [0, 1], got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// One region's (or one mixture component's) crossing law: Poisson
/// intensity and the fold-count distribution functions at its threshold.
#[derive(Debug, Clone)]
pub(crate) struct SingleLaw {
    pub(crate) lambda: f64,
    /// cdfs[n] = F^(n*)(threshold); one entry beyond the Poisson
    /// truncation so densities can difference the last term.
    pub(crate) cdfs: Vec<f64>,
}

impl SingleLaw {
    pub(crate) fn build(
        lambda: f64,
        severity: &Severity,
        threshold: f64,
        horizon: f64,
        num: &NumericsConfig,
    ) -> Result<SingleLaw> {
        let weights = poisson_weights(lambda * horizon, num.poisson_tail)?;
        let cdfs = nfold_cdf_table(
            severity,
            threshold,
            weights.len(),
            num.grid_points,
            num.grid_tail,
        )?;
        Ok(SingleLaw { lambda, cdfs })
    }

    pub(crate) fn survival(&self, t: f64) -> f64 {
        let mean = self.lambda * t;
        let mut w = (-mean).exp();
        let mut acc = 0.0;
        for (n, &f) in self.cdfs.iter().enumerate() {
            acc += w * f;
            w *= mean / (n as f64 + 1.0);
        }
        acc.min(1.0)
    }

    pub(crate) fn density(&self, t: f64) -> f64 {
        let mean = self.lambda * t;
        let mut w = (-mean).exp();
        let mut acc = 0.0;
        for (n, pair) in self.cdfs.windows(2).enumerate() {
            acc += w * (pair[0] - pair[1]).max(0.0);
            w *= mean / (n as f64 + 1.0);
        }
        self.lambda * acc
    }
}

/// A mixture component for the proportional structure: a split node's
/// probability weight and the crossing law given that split.
#[derive(Debug, Clone)]
pub(crate) struct MixComponent {
    pub(crate) weight: f64,
    pub(crate) law: SingleLaw,
}

#[derive(Debug, Clone)]
pub(crate) enum LawKind {
    /// Independent regions: survival is the product of the two laws.
    Independent(SingleLaw, SingleLaw),
    /// Common event stream with per-region severities: one Poisson count
    /// drives both fold tables.
    CommonShock { lambda: f64, folds1: Vec<f64>, folds2: Vec<f64> },
    /// Common stream with a proportional split: mixture over split values.
    ProportionalMix(Vec<MixComponent>),
}

/// Distribution of the trigger time on [0, horizon].
#[derive(Debug, Clone)]
pub struct TriggerLaw {
    pub horizon: f64,
    pub(crate) kind: LawKind,
}

impl TriggerLaw {
    /// Probability that no trigger has happened by time t.
    pub fn survival(&self, t: f64) -> f64 {
        self.check_time(t);
        match &self.kind {
            LawKind::Independent(a, b) => a.survival(t) * b.survival(t),
            LawKind::CommonShock { lambda, folds1, folds2 } => {
                common_survival(*lambda, folds1, folds2, t)
            }
            LawKind::ProportionalMix(nodes) => nodes
                .iter()
                .map(|node| node.weight * node.law.survival(t))
                .sum(),
        }
    }

    /// Density of the trigger time at t.
    pub fn density(&self, t: f64) -> f64 {
        self.check_time(t);
        match &self.kind {
            LawKind::Independent(a, b) => {
                a.density(t) * b.survival(t) + a.survival(t) * b.density(t)
            }
            LawKind::CommonShock { lambda, folds1, folds2 } => {
                common_density(*lambda, folds1, folds2, t)
            }
            LawKind::ProportionalMix(nodes) => nodes
                .iter()
                .map(|node| node.weight * node.law.density(t))
                .sum(),
        }
    }

    pub(crate) fn kind(&self) -> &LawKind {
        &self.kind
    }

    fn check_time(&self, t: f64) {
        assert!(
            t >= 0.0 && t <= self.horizon * (1.0 + 1e-9),
            "time {t} outside the law's horizon {}",
            self.horizon
        );
    }
}

fn common_survival(lambda: f64, folds1: &[f64], folds2: &[f64], t: f64) -> f64 {
    let mean = lambda * t;
    let mut w = (-mean).exp();
    let mut acc = 0.0;
    let len = folds1.len().min(folds2.len());
    for n in 0..len {
        acc += w * folds1[n] * folds2[n];
        w *= mean / (n as f64 + 1.0);
    }
    acc.min(1.0)
}

fn common_density(lambda: f64, folds1: &[f64], folds2: &[f64], t: f64) -> f64 {
    let mean = lambda * t;
    let mut w = (-mean).exp();
    let mut acc = 0.0;
    let len = folds1.len().min(folds2.len());
    for n in 0..len.saturating_sub(1) {
        let now = folds1[n] * folds2[n];
        let next = folds1[n + 1] * folds2[n + 1];
        acc += w * (now - next).max(0.0);
        w *= mean / (n as f64 + 1.0);
    }
    lambda * acc
}

/// Effective threshold for a proportional split: region 1 receives p of
/// each loss and region 2 the rest, so the total crosses when it reaches
/// the smaller of the scaled thresholds.
pub(crate) fn split_threshold(d1: f64, d2: f64, p: f64) -> f64 {
    (d1 / p).min(d2 / (1.0 - p))
}

/// Builds the law of the trigger time for thresholds (d1, d2) up to the
/// horizon. With a tilt, intensities and severities are transformed to
/// the equity-conversion measure: each severity is exponentially tilted
/// by its impact times (1 - nu) and each intensity is scaled by the
/// corresponding transform value. Proportional splits tilt conditionally
/// on the split and mix afterwards.
pub fn trigger_law(
    model: &LossModel,
    d1: f64,
    d2: f64,
    horizon: f64,
    tilt: Option<&TiltSpec>,
    num: &NumericsConfig,
) -> Result<TriggerLaw> {
    model.validate()?;
    require_positive(d1, "threshold d1")?;
    require_positive(d2, "threshold d2")?;
    require_positive(horizon, "horizon")?;
    if let Some(t) = tilt {
        t.validate()?;
    }
    num.validate()?;

    let kind = match model {
        LossModel::Independent { region1, region2 } => {
            let (lam1, sev1) = tilted_stream(region1.lambda, &region1.severity, tilt, Region::One)?;
            let (lam2, sev2) = tilted_stream(region2.lambda, &region2.severity, tilt, Region::Two)?;
            let a = SingleLaw::build(lam1, &sev1, d1, horizon, num)?;
            let b = SingleLaw::build(lam2, &sev2, d2, horizon, num)?;
            LawKind::Independent(a, b)
        }
        LossModel::CommonShock { lambda, severity1, severity2 } => {
            let (theta1, theta2) = match tilt {
                Some(spec) => (
                    spec.alpha * (1.0 - spec.nu),
                    spec.beta * (1.0 - spec.nu),
                ),
                None => (0.0, 0.0),
            };
            let lam = lambda * severity1.laplace(theta1)? * severity2.laplace(theta2)?;
            let sev1 = severity1.exp_tilt(theta1)?;
            let sev2 = severity2.exp_tilt(theta2)?;
            let weights = poisson_weights(lam * horizon, num.poisson_tail)?;
            let folds1 =
                nfold_cdf_table(&sev1, d1, weights.len(), num.grid_points, num.grid_tail)?;
            let folds2 =
                nfold_cdf_table(&sev2, d2, weights.len(), num.grid_points, num.grid_tail)?;
            LawKind::CommonShock { lambda: lam, folds1, folds2 }
        }
        LossModel::Proportional { lambda, severity, proportion } => {
            let points = proportion.quadrature_nodes(num.proportion_nodes)?;
            let mut nodes = Vec::with_capacity(points.len());
            for (p, weight) in points {
                let threshold = split_threshold(d1, d2, p);
                let (lam, sev) = match tilt {
                    Some(spec) => {
                        let theta =
                            (1.0 - spec.nu) * (spec.alpha * p + spec.beta * (1.0 - p));
                        (lambda * severity.laplace(theta)?, severity.exp_tilt(theta)?)
                    }
                    None => (*lambda, severity.clone()),
                };
                let law = SingleLaw::build(lam, &sev, threshold, horizon, num)?;
                nodes.push(MixComponent { weight, law });
            }
            LawKind::ProportionalMix(nodes)
        }
    };
    Ok(TriggerLaw { horizon, kind })
}

enum Region {
    One,
    Two,
}

/// Intensity and severity of one independent stream under the optional
/// tilt; region selects which impact coefficient applies.
fn tilted_stream(
    lambda: f64,
    severity: &Severity,
    tilt: Option<&TiltSpec>,
    region: Region,
) -> Result<(f64, Severity)> {
    match tilt {
        None => Ok((lambda, severity.clone())),
        Some(spec) => {
            let impact = match region {
                Region::One => spec.alpha,
                Region::Two => spec.beta,
            };
            let theta = impact * (1.0 - spec.nu);
            Ok((lambda * severity.laplace(theta)?, severity.exp_tilt(theta)?))
        }
    }
}
