//! Loss process models for two catastrophe regions and the equity impact
//! constants attached to them.
//!
//! Three dependence structures are supported:
//!
//! - [`LossModel::Independent`]: each region has its own compound Poisson
//!   process, independent of the other.
//! - [`LossModel::CommonShock`]: a single event stream hits both regions,
//!   with independent severities per region.
//! - [`LossModel::Proportional`]: a single event stream produces one total
//!   severity that is split between the regions by a proportion, either
//!   fixed or beta distributed (drawn once and held).
//!
//! The share price discounts losses through exp(-alpha L1 - beta L2) with
//! a compensating drift that makes the impact factor a martingale; the
//! `kappa` constants computed here are exactly those compensators per unit
//! of impact and intensity.

use serde::{Deserialize, Serialize};

use crate::distributions::Severity;
use crate::error::{invalid, require_nonnegative, require_positive, Result};
use crate::quad;

/// A compound Poisson loss process: events at rate `lambda` per year, each
/// with an independent severity draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPoisson {
    pub lambda: f64,
    pub severity: Severity,
}

impl CompoundPoisson {
    pub fn validate(&self) -> Result<()> {
        check_intensity(self.lambda)?;
        self.severity.validate()
    }
}

/// Intensities may be zero (a region that never generates events) but not
/// negative, and are capped to keep Poisson truncations tractable.
fn check_intensity(lambda: f64) -> Result<()> {
    require_nonnegative(lambda, "event intensity")?;
    if lambda > 500.0 {
        return Err(invalid(format!("event intensity too large: {lambda}")));
    }
    Ok(())
}

/// The share of a total loss attributed to region 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Proportion {
    /// Always the same split.
    Fixed { p: f64 },
    /// Beta-distributed split, sampled once per scenario.
    Beta { alpha: f64, beta: f64 },
    /// Finitely many split values with probability weights, for empirical
    /// split distributions. Weights must sum to one.
    Discrete { points: Vec<(f64, f64)> },
}

impl Proportion {
    pub fn validate(&self) -> Result<()> {
        match self {
            Proportion::Fixed { p } => {
                if !(p.is_finite() && *p > 0.0 && *p < 1.0) {
                    return Err(invalid(format!("proportion must lie in (0, 1), got {p}")));
                }
            }
            Proportion::Beta { alpha, beta } => {
                require_positive(*alpha, "proportion beta shape alpha")?;
                require_positive(*beta, "proportion beta shape beta")?;
            }
            Proportion::Discrete { points } => {
                if points.is_empty() {
                    return Err(invalid("discrete proportion needs at least one point"));
                }
                let mut total = 0.0;
                for &(p, w) in points {
                    if !(p.is_finite() && p > 0.0 && p < 1.0) {
                        return Err(invalid(format!("split value must lie in (0, 1), got {p}")));
                    }
                    require_positive(w, "split weight")?;
                    total += w;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("split weights must sum to 1, got {total}")));
                }
            }
        }
        Ok(())
    }

    /// Expectation of the proportion.
    pub fn mean(&self) -> f64 {
        match self {
            Proportion::Fixed { p } => *p,
            Proportion::Beta { alpha, beta } => alpha / (alpha + beta),
            Proportion::Discrete { points } => points.iter().map(|&(p, w)| p * w).sum(),
        }
    }

    /// Draws one split value.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            Proportion::Fixed { p } => Ok(*p),
            Proportion::Beta { alpha, beta } => {
                let dist = rand_distr::Beta::new(*alpha, *beta)
                    .map_err(|e| invalid(format!("beta proportion sampling: {e}")))?;
                Ok(rng.sample(dist))
            }
            Proportion::Discrete { points } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(p, w) in points {
                    acc += w;
                    if u < acc {
                        return Ok(p);
                    }
                }
                Ok(points.last().expect("validated non-empty").0)
            }
        }
    }

    /// Expectation of a function of the proportion. Fixed splits evaluate
    /// directly; beta splits use Gauss-Legendre nodes against the density.
    pub fn expect<F: FnMut(f64) -> f64>(&self, nodes: usize, mut f: F) -> Result<f64> {
        match self {
            Proportion::Fixed { p } => Ok(f(*p)),
            _ => {
                let pts = self.quadrature_nodes(nodes)?;
                Ok(pts.iter().map(|&(p, w)| w * f(p)).sum())
            }
        }
    }

    /// Nodes and weights representing the proportion's law. The weights
    /// sum to one; for beta laws they are Gauss-Legendre weights times the
    /// density, normalized to remove the residual quadrature error in the
    /// total mass.
    pub fn quadrature_nodes(&self, nodes: usize) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        match self {
            Proportion::Fixed { p } => Ok(vec![(*p, 1.0)]),
            Proportion::Discrete { points } => {
                let total: f64 = points.iter().map(|&(_, w)| w).sum();
                Ok(points.iter().map(|&(p, w)| (p, w / total)).collect())
            }
            Proportion::Beta { alpha, beta } => {
                if nodes < 2 {
                    return Err(invalid("beta proportion needs at least 2 quadrature nodes"));
                }
                let rule = quad::legendre(nodes);
                let ln_norm = statrs::function::gamma::ln_gamma(alpha + beta)
                    - statrs::function::gamma::ln_gamma(*alpha)
                    - statrs::function::gamma::ln_gamma(*beta);
                let mut pts: Vec<(f64, f64)> = rule
                    .nodes_on(0.0, 1.0)
                    .into_iter()
                    .map(|(p, w)| {
                        let ln_pdf = ln_norm + (alpha - 1.0) * p.ln() + (beta - 1.0) * (1.0 - p).ln();
                        (p, w * ln_pdf.exp())
                    })
                    .collect();
                let total: f64 = pts.iter().map(|&(_, w)| w).sum();
                if !(total.is_finite() && total > 0.5) {
                    return Err(crate::error::tolerance(format!(
                        "beta proportion quadrature mass {total} is unusable; \
                         shapes may be too extreme for {nodes} nodes"
                    )));
                }
                for pt in pts.iter_mut() {
                    pt.1 /= total;
                }
                Ok(pts)
            }
        }
    }
}

/// Dependence structure of the two regional loss processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LossModel {
    /// Independent compound Poisson processes per region.
    Independent { region1: CompoundPoisson, region2: CompoundPoisson },
    /// One event stream; each event draws independent severities for the
    /// two regions.
    CommonShock { lambda: f64, severity1: Severity, severity2: Severity },
    /// One event stream; each event draws a total severity that is split
    /// between the regions by the proportion.
    Proportional { lambda: f64, severity: Severity, proportion: Proportion },
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossModel::Independent { region1, region2 } => {
                region1.validate()?;
                region2.validate()
            }
            LossModel::CommonShock { lambda, severity1, severity2 } => {
                check_intensity(*lambda)?;
                severity1.validate()?;
                severity2.validate()
            }
            LossModel::Proportional { lambda, severity, proportion } => {
                check_intensity(*lambda)?;
                severity.validate()?;
                proportion.validate()
            }
        }
    }
}

/// Equity impact coefficients: the share price is scaled by
/// exp(-alpha L1 - beta L2 + compensator drift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impact {
    pub alpha: f64,
    pub beta: f64,
}

impl Impact {
    pub fn validate(&self) -> Result<()> {
        require_positive(self.alpha, "impact alpha")?;
        require_positive(self.beta, "impact beta")?;
        Ok(())
    }
}

/// Martingale compensator constants per unit impact. For independent
/// regions each region has its own constant; the common-event structures
/// share one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    PerRegion { kappa1: f64, kappa2: f64 },
    Common { kappa: f64 },
}

/// Number of quadrature nodes used for expectations over a beta
/// proportion in the closed-form pricing path.
pub const DEFAULT_PROPORTION_NODES: usize = 64;

/// Compensator constants that make exp(-alpha L1 - beta L2) times the
/// compensating drift a martingale under the given loss model.
pub fn kappa(model: &LossModel, impact: &Impact, proportion_nodes: usize) -> Result<Kappa> {
    model.validate()?;
    impact.validate()?;
    let Impact { alpha, beta } = *impact;
    match model {
        LossModel::Independent { region1, region2 } => {
            let kappa1 = (1.0 - region1.severity.laplace(alpha)?) / alpha;
            let kappa2 = (1.0 - region2.severity.laplace(beta)?) / beta;
            Ok(Kappa::PerRegion { kappa1, kappa2 })
        }
        LossModel::CommonShock { severity1, severity2, .. } => {
            let joint = severity1.laplace(alpha)? * severity2.laplace(beta)?;
            Ok(Kappa::Common { kappa: (1.0 - joint) / (alpha + beta) })
        }
        LossModel::Proportional { severity, proportion, .. } => {
            let mean_transform = proportion.expect(proportion_nodes, |p| {
                severity.laplace(alpha * p + beta * (1.0 - p)).unwrap_or(f64::NAN)
            })?;
            if !mean_transform.is_finite() {
                return Err(crate::error::tolerance(
                    "severity transform failed inside the proportion expectation",
                ));
            }
            Ok(Kappa::Common { kappa: (1.0 - mean_transform) / (alpha + beta) })
        }
    }
}

/// Total compensating drift rate for the impact factor, the sum over event
/// streams of intensity times impact times kappa.
pub fn compensator_rate(model: &LossModel, impact: &Impact, kap: &Kappa) -> Result<f64> {
    let Impact { alpha, beta } = *impact;
    match (model, kap) {
        (LossModel::Independent { region1, region2 }, Kappa::PerRegion { kappa1, kappa2 }) => {
            Ok(alpha * kappa1 * region1.lambda + beta * kappa2 * region2.lambda)
        }
        (LossModel::CommonShock { lambda, .. }, Kappa::Common { kappa })
        | (LossModel::Proportional { lambda, .. }, Kappa::Common { kappa }) => {
            Ok((alpha + beta) * kappa * lambda)
        }
        _ => Err(invalid("kappa variant does not match the loss model".to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_exp() -> Severity {
        Severity::Exponential { rate: 1.0 }
    }

    #[test]
    fn common_shock_kappa_for_unit_exponentials() {
        // Two standard exponential severities with unit impacts: the joint
        // transform is 1/4, so kappa is (1 - 1/4) / 2.
        let model = LossModel::CommonShock {
            lambda: 1.0,
            severity1: unit_exp(),
            severity2: unit_exp(),
        };
        let k = kappa(&model, &Impact { alpha: 1.0, beta: 1.0 }, 64).unwrap();
        match k {
            Kappa::Common { kappa } => assert_relative_eq!(kappa, 0.375, epsilon = 1e-14),
            other => panic!("unexpected kappa {other:?}"),
        }
    }

    #[test]
    fn proportional_kappa_with_even_split() {
        // With p = 1/2 and unit impacts the effective tilt is 1, so kappa
        // is (1 - 1/2) / 2.
        let model = LossModel::Proportional {
            lambda: 1.0,
            severity: unit_exp(),
            proportion: Proportion::Fixed { p: 0.5 },
        };
        let k = kappa(&model, &Impact { alpha: 1.0, beta: 1.0 }, 64).unwrap();
        match k {
            Kappa::Common { kappa } => assert_relative_eq!(kappa, 0.25, epsilon = 1e-14),
            other => panic!("unexpected kappa {other:?}"),
        }
    }

    #[test]
    fn independent_kappas_are_per_region() {
        let model = LossModel::Independent {
            region1: CompoundPoisson { lambda: 1.4, severity: unit_exp() },
            region2: CompoundPoisson {
                lambda: 0.7,
                severity: Severity::Exponential { rate: 2.0 },
            },
        };
        let impact = Impact { alpha: 0.5, beta: 0.25 };
        let k = kappa(&model, &impact, 64).unwrap();
        match k {
            Kappa::PerRegion { kappa1, kappa2 } => {
                assert_relative_eq!(kappa1, (1.0 - 1.0 / 1.5) / 0.5, epsilon = 1e-14);
                assert_relative_eq!(kappa2, (1.0 - 2.0 / 2.25) / 0.25, epsilon = 1e-14);
                let rate = compensator_rate(&model, &impact, &k).unwrap();
                assert_relative_eq!(
                    rate,
                    0.5 * kappa1 * 1.4 + 0.25 * kappa2 * 0.7,
                    epsilon = 1e-14
                );
            }
            other => panic!("unexpected kappa {other:?}"),
        }
    }

    #[test]
    fn beta_proportion_expectation_matches_closed_forms() {
        // The normalized rule integrates constants exactly; polynomial
        // moments carry the residual endpoint error of Gauss-Legendre
        // against the fractional-power beta density, a few parts in 1e8
        // at 64 nodes and quartering with each doubling.
        let prop = Proportion::Beta { alpha: 2.1531, beta: 3.5135 };
        let mass = prop.expect(64, |_| 1.0).unwrap();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-14);
        let mean = prop.expect(64, |p| p).unwrap();
        assert_relative_eq!(mean, prop.mean(), epsilon = 1e-7);
        let a = 2.1531;
        let b = 3.5135;
        let second = prop.expect(64, |p| p * p).unwrap();
        assert_relative_eq!(second, a * (a + 1.0) / ((a + b) * (a + b + 1.0)), epsilon = 1e-7);
        let fine = prop.expect(256, |p| p).unwrap();
        assert!(
            (fine - prop.mean()).abs() < 0.2 * (mean - prop.mean()).abs() + 1e-12,
            "refinement must shrink the moment error: {} vs {}",
            (fine - prop.mean()).abs(),
            (mean - prop.mean()).abs()
        );
    }

    #[test]
    fn degenerate_proportion_uses_single_node() {
        let nodes = Proportion::Fixed { p: 0.38 }.quadrature_nodes(64).unwrap();
        assert_eq!(nodes, vec![(0.38, 1.0)]);
    }

    #[test]
    fn proportional_kappa_averages_over_beta_splits() {
        // Mixture of tilts must differ from the tilt at the mean split
        // whenever the transform is nonlinear in p.
        let severity = Severity::LogNormal { mu: -1.477, sigma: 0.902 };
        let beta_model = LossModel::Proportional {
            lambda: 1.4,
            severity: severity.clone(),
            proportion: Proportion::Beta { alpha: 2.1531, beta: 3.5135 },
        };
        let mean_p = Proportion::Beta { alpha: 2.1531, beta: 3.5135 }.mean();
        let fixed_model = LossModel::Proportional {
            lambda: 1.4,
            severity,
            proportion: Proportion::Fixed { p: mean_p },
        };
        let impact = Impact { alpha: 0.9, beta: 0.1 };
        let k_beta = match kappa(&beta_model, &impact, 64).unwrap() {
            Kappa::Common { kappa } => kappa,
            _ => unreachable!(),
        };
        let k_fixed = match kappa(&fixed_model, &impact, 64).unwrap() {
            Kappa::Common { kappa } => kappa,
            _ => unreachable!(),
        };
        assert!((k_beta - k_fixed).abs() > 1e-6, "{k_beta} vs {k_fixed}");
        assert!(k_beta > 0.0 && k_fixed > 0.0);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let bad = LossModel::CommonShock {
            lambda: -1.0,
            severity1: unit_exp(),
            severity2: unit_exp(),
        };
        assert!(bad.validate().is_err());
        let quiet = LossModel::CommonShock {
            lambda: 0.0,
            severity1: unit_exp(),
            severity2: unit_exp(),
        };
        assert!(quiet.validate().is_ok(), "zero intensity is a valid degenerate model");
        let bad = LossModel::Proportional {
            lambda: 1.0,
            severity: unit_exp(),
            proportion: Proportion::Fixed { p: 1.0 },
        };
        assert!(bad.validate().is_err());
        assert!(Impact { alpha: 0.0, beta: 1.0 }.validate().is_err());
    }
}
