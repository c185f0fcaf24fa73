//! Acceptance suite. Each test is one numbered end-to-end check of the
//! analytic pricing engine against an independent reference: the Monte
//! Carlo payoff oracle, textbook distribution functions, an Euler scheme
//! for the rate dynamics, or calibration on synthetic data with known
//! truth. The harness line printed for each test is the PASS/FAIL
//! verdict for that check.
//!
//! The example grid (four loss models, thresholds in {0.4, 2, 4}^2,
//! retention exponent nu in {0.2, 0.5, 0.8}, one hundred thousand payoff
//! paths per point) is built once and shared by checks 1, 6, and 9.

use std::sync::OnceLock;
use std::time::Instant;

use cococat::calibration::{
    estimate_intensity, fit_beta, fit_proportion, fit_severity, impact_coefficients,
    intensity_bootstrap_interval, synthesize_proportional_dataset, Date, SeverityFamily,
};
use cococat::convolution::{compound_poisson_cdf, nfold_cdf_table};
use cococat::distributions::Severity;
use cococat::loss_models::{
    kappa, CompoundPoisson, Impact, Kappa, LossModel, Proportion, DEFAULT_PROPORTION_NODES,
};
use cococat::mc::{
    simulate_price, simulate_trigger_times, McEstimate, PriceSimSummary, SimulationConfig,
};
use cococat::pricing::{
    price, price_multi_region, Covenant, CouponVariant, ExponentVariant, MarketParams,
    NumericsConfig, PriceBreakdown, Region, RegionMode,
};
use cococat::term_structure::{zcb_price, RateParams};
use cococat::trigger::{trigger_law, TiltSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma as GammaDist};

const DELTA: f64 = 0.02;
const GRID_THRESHOLDS: [f64; 3] = [0.4, 2.0, 4.0];
const GRID_NUS: [f64; 3] = [0.2, 0.5, 0.8];
const GRID_PATHS: usize = 100_000;
const RETRY_PATHS: usize = 800_000;

fn market() -> MarketParams {
    MarketParams {
        r0: 0.02,
        rate: RateParams { theta: 0.2, m: 0.001125, sigma: 0.03 },
        s0: 10.0,
        sigma_s: 0.2,
        rho: -0.5,
        initial_reference_rate: None,
    }
}

fn covenant(nu: f64) -> Covenant {
    Covenant {
        face: 1.0,
        maturity: 5.0,
        tenor: 0.25,
        spread: 0.10,
        conversion_fraction: 0.1,
        nu,
    }
}

fn region1_severity() -> Severity {
    Severity::LogNormal { mu: -4.564, sigma: 1.813 }
}

fn region2_severity() -> Severity {
    Severity::LogNormal { mu: -2.439, sigma: 1.183 }
}

fn total_severity() -> Severity {
    Severity::LogNormal { mu: -1.477, sigma: 0.902 }
}

fn beta_proportion() -> Proportion {
    Proportion::Beta { alpha: 2.1531, beta: 3.5135 }
}

fn example_models() -> Vec<(&'static str, LossModel)> {
    vec![
        (
            "independent",
            LossModel::Independent {
                region1: CompoundPoisson { lambda: 1.4, severity: region1_severity() },
                region2: CompoundPoisson { lambda: 1.4, severity: region2_severity() },
            },
        ),
        (
            "common_shock",
            LossModel::CommonShock {
                lambda: 1.4,
                severity1: region1_severity(),
                severity2: region2_severity(),
            },
        ),
        (
            "proportional_fixed",
            LossModel::Proportional {
                lambda: 1.4,
                severity: total_severity(),
                proportion: Proportion::Fixed { p: 0.38 },
            },
        ),
        (
            "proportional_beta",
            LossModel::Proportional {
                lambda: 1.4,
                severity: total_severity(),
                proportion: beta_proportion(),
            },
        ),
    ]
}

struct GridPoint {
    model: &'static str,
    model_index: usize,
    d1: f64,
    d2: f64,
    nu: f64,
    seed: u64,
    analytic: PriceBreakdown,
    mc: PriceSimSummary,
}

struct Grid {
    points: Vec<GridPoint>,
    build_seconds: f64,
    slowest_price_seconds: f64,
}

static GRID: OnceLock<Grid> = OnceLock::new();

fn shared_grid() -> &'static Grid {
    GRID.get_or_init(|| {
        let started = Instant::now();
        let market = market();
        let num = NumericsConfig::default();
        let mut points = Vec::new();
        let mut slowest = 0.0f64;
        let mut seed = 1000u64;
        for (model_index, (name, model)) in example_models().into_iter().enumerate() {
            let impact = impact_coefficients(DELTA, &model).expect("impact coefficients");
            for &d1 in &GRID_THRESHOLDS {
                for &d2 in &GRID_THRESHOLDS {
                    for &nu in &GRID_NUS {
                        let cov = covenant(nu);
                        let clock = Instant::now();
                        let analytic =
                            price(&cov, &market, &model, &impact, d1, d2, &num).expect("price");
                        slowest = slowest.max(clock.elapsed().as_secs_f64());
                        let config = SimulationConfig { paths: GRID_PATHS, seed, step: 0.01 };
                        let mc = simulate_price(&cov, &market, &model, &impact, d1, d2, &config)
                            .expect("simulate price");
                        println!(
                            "grid {name} d1={d1} d2={d2} nu={nu}: z coupon {:+.2} \
                             conversion {:+.2} principal {:+.2} total {:+.2}",
                            mc.coupon_leg.z_score(analytic.coupon_leg),
                            mc.conversion_leg.z_score(analytic.conversion_leg),
                            mc.principal_leg.z_score(analytic.principal_leg),
                            mc.total.z_score(analytic.total),
                        );
                        points.push(GridPoint {
                            model: name,
                            model_index,
                            d1,
                            d2,
                            nu,
                            seed,
                            analytic,
                            mc,
                        });
                        seed += 1;
                    }
                }
            }
        }
        Grid {
            points,
            build_seconds: started.elapsed().as_secs_f64(),
            slowest_price_seconds: slowest,
        }
    })
}

/// Re-simulates one grid point at eight times the path count with a
/// fresh seed. A fixed-seed suite of 108 three-sigma comparisons has a
/// noticeable chance of one benign excursion, so a point is only failed
/// when the independent higher-precision rerun confirms the gap.
fn retry_point(p: &GridPoint) -> PriceSimSummary {
    let model = &example_models()[p.model_index].1;
    let impact = impact_coefficients(DELTA, model).expect("impact coefficients");
    let config = SimulationConfig { paths: RETRY_PATHS, seed: p.seed + 900_000, step: 0.01 };
    simulate_price(&covenant(p.nu), &market(), model, &impact, p.d1, p.d2, &config)
        .expect("simulate price")
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

#[test]
fn criterion_1_analytic_prices_match_monte_carlo_on_the_example_grid() {
    let grid = shared_grid();
    assert_eq!(grid.points.len(), 108);
    assert!(
        grid.slowest_price_seconds < 5.0,
        "slowest single analytic price took {:.2} s",
        grid.slowest_price_seconds
    );

    let mut retried = 0usize;
    let mut worst: f64 = 0.0;
    for p in &grid.points {
        let z = p.mc.total.z_score(p.analytic.total);
        worst = worst.max(z.abs());
        if z.abs() <= 3.0 {
            continue;
        }
        retried += 1;
        let retry = retry_point(p);
        let z_retry = retry.total.z_score(p.analytic.total);
        assert!(
            z_retry.abs() <= 3.0,
            "{} d1={} d2={} nu={}: analytic {:.6} vs mc {:.6} +- {:.6} \
             (z={:.2} at {} paths, z={:.2} at {} paths on retry)",
            p.model,
            p.d1,
            p.d2,
            p.nu,
            p.analytic.total,
            retry.total.mean,
            retry.total.std_error,
            z,
            GRID_PATHS,
            z_retry,
            RETRY_PATHS,
        );
    }
    println!(
        "grid: 108 points, worst |z| {:.2}, {} retried, built in {:.0} s, \
         slowest analytic price {:.2} s",
        worst, retried, grid.build_seconds, grid.slowest_price_seconds
    );
}

#[test]
fn criterion_2_compensated_equity_factor_is_a_martingale() {
    let unit_impact = Impact { alpha: 1.0, beta: 1.0 };
    let exp1 = Severity::Exponential { rate: 1.0 };

    // One model per compensator formula, first with exponential
    // severities and unit impact (the per-region and common formulas
    // have simple closed forms there), then with the example lognormal
    // severities and the impact pair implied by the example discount.
    let exponential_models = vec![
        LossModel::Independent {
            region1: CompoundPoisson { lambda: 1.4, severity: exp1.clone() },
            region2: CompoundPoisson { lambda: 1.4, severity: exp1.clone() },
        },
        LossModel::CommonShock { lambda: 1.4, severity1: exp1.clone(), severity2: exp1.clone() },
        LossModel::Proportional {
            lambda: 1.4,
            severity: exp1.clone(),
            proportion: beta_proportion(),
        },
    ];
    let lognormal_models: Vec<LossModel> =
        example_models().into_iter().take(2).map(|(_, m)| m).collect();
    let lognormal_models = {
        let mut v = lognormal_models;
        v.push(LossModel::Proportional {
            lambda: 1.4,
            severity: total_severity(),
            proportion: beta_proportion(),
        });
        v
    };

    let mut seed = 2000u64;
    let mut run = |model: &LossModel, impact: &Impact, label: &str| {
        let kap = kappa(model, impact, DEFAULT_PROPORTION_NODES).expect("kappa");
        for &t in &[1.0, 5.0] {
            let config = SimulationConfig { paths: 100_000, seed, step: 0.01 };
            seed += 1;
            let est = simulate_martingale(model, impact, &kap, t, &config);
            let z = est.z_score(1.0);
            assert!(
                z.abs() <= 3.0,
                "{label} t={t}: mean {:.6} +- {:.6}, z={:.2}",
                est.mean,
                est.std_error,
                z
            );
        }
    };

    for (i, model) in exponential_models.iter().enumerate() {
        run(model, &unit_impact, &format!("exponential severities, formula {}", i + 1));
    }
    for (i, model) in lognormal_models.iter().enumerate() {
        let impact = impact_coefficients(DELTA, model).expect("impact coefficients");
        run(model, &impact, &format!("lognormal severities, formula {}", i + 1));
    }

    // Negative control: a compensator that is wrong by 0.1 must be
    // rejected loudly.
    let model = LossModel::CommonShock {
        lambda: 1.4,
        severity1: region1_severity(),
        severity2: region2_severity(),
    };
    let impact = impact_coefficients(DELTA, &model).expect("impact coefficients");
    let kap = match kappa(&model, &impact, DEFAULT_PROPORTION_NODES).expect("kappa") {
        Kappa::Common { kappa } => Kappa::Common { kappa: kappa + 0.1 },
        Kappa::PerRegion { .. } => unreachable!("common shock uses a common kappa"),
    };
    let config = SimulationConfig { paths: 100_000, seed: 2999, step: 0.01 };
    let est = simulate_martingale(&model, &impact, &kap, 5.0, &config);
    let z = est.z_score(1.0);
    assert!(z.abs() > 5.0, "perturbed compensator was not rejected: z={z:.2}");
    println!("negative control rejected with |z| = {:.0}", z.abs());
}

fn simulate_martingale(
    model: &LossModel,
    impact: &Impact,
    kap: &Kappa,
    t: f64,
    config: &SimulationConfig,
) -> McEstimate {
    cococat::mc::simulate_martingale(model, impact, kap, t, config).expect("simulate martingale")
}

#[test]
fn criterion_3_trigger_survival_and_density_match_event_simulation() {
    let num = NumericsConfig::default();
    let horizon = 5.0;
    let checkpoints = [0.5, 1.0, 2.5, 5.0];
    let paths = 1_000_000usize;

    let mut independent_times: Option<Vec<f64>> = None;
    for (i, (name, model)) in example_models().into_iter().enumerate() {
        let law = trigger_law(&model, 2.0, 2.0, horizon, None, &num).expect("trigger law");
        let config = SimulationConfig { paths, seed: 3000 + i as u64, step: 0.01 };
        let times =
            simulate_trigger_times(&model, 2.0, 2.0, horizon, &config).expect("trigger times");
        for &t in &checkpoints {
            let s = law.survival(t);
            let hits = times.iter().filter(|&&tau| tau > t).count();
            let s_hat = hits as f64 / paths as f64;
            let sigma = (s * (1.0 - s) / paths as f64).sqrt();
            let z = (s_hat - s) / sigma;
            assert!(
                z.abs() <= 3.0,
                "{name} t={t}: survival {s:.6} vs empirical {s_hat:.6}, z={z:.2}"
            );
        }
        if name == "independent" {
            independent_times = Some(times);
        }
    }

    // Histogram test of the trigger-time density for the independent
    // model: twenty equal bins on [0, 5] plus the censored cell, with
    // expected masses from quadrature of the density itself.
    let model = &example_models()[0].1;
    let law = trigger_law(model, 2.0, 2.0, horizon, None, &num).expect("trigger law");
    let times = independent_times.expect("independent trigger times");
    let bins = 20usize;
    let width = horizon / bins as f64;

    let mut observed = vec![0u64; bins + 1];
    for &tau in &times {
        if tau > horizon {
            observed[bins] += 1;
        } else {
            let k = ((tau / width) as usize).min(bins - 1);
            observed[k] += 1;
        }
    }

    let mut expected = Vec::with_capacity(bins + 1);
    let mut mass_sum = 0.0;
    for k in 0..bins {
        let a = k as f64 * width;
        let b = a + width;
        let mass = simpson(|t| law.density(t), a, b, 64);
        mass_sum += mass;
        expected.push(mass * paths as f64);
    }
    let tail = law.survival(horizon);
    expected.push(tail * paths as f64);
    assert!(
        (mass_sum + tail - 1.0).abs() < 1e-6,
        "density mass and terminal survival do not add to one: {}",
        mass_sum + tail
    );

    let mut stat = 0.0;
    for (o, e) in observed.iter().zip(&expected) {
        assert!(*e > 5.0, "expected bin count too small for a chi-square test: {e}");
        let diff = *o as f64 - e;
        stat += diff * diff / e;
    }
    let dof = bins as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p > 0.01, "trigger-time histogram chi-square stat {stat:.1} (dof {dof}), p = {p:.4}");
    println!("trigger density chi-square p = {p:.3}");
}

#[test]
fn criterion_4_bond_closed_form_matches_euler_simulation() {
    let rate = RateParams { theta: 0.2, m: 0.001125, sigma: 0.03 };
    let r0 = 0.02;

    let at_zero = zcb_price(r0, 0.0, &rate).expect("bond price");
    assert!((at_zero - 1.0).abs() < 1e-12, "P(r0, 0) = {at_zero}");

    // Independent Euler discretisation of the pricing dynamics. The
    // closed form prices the signed state y with dy = -(theta/2) dt +
    // (sigma/2) dW and short rate r = y^2; the state is free to cross
    // zero, and no reversion level enters the drift. Discounting uses
    // the trapezoid rule on r along each path.
    let step = 1e-4;
    let paths = 100_000u64;
    for (case, &t_mat) in [1.0f64, 5.0].iter().enumerate() {
        let closed = zcb_price(r0, t_mat, &rate).expect("bond price");
        let steps = (t_mat / step).round() as usize;
        let sqrt_step = step.sqrt();
        let drift = -0.5 * rate.theta * step;
        let vol = 0.5 * rate.sigma * sqrt_step;
        let samples: Vec<f64> = (0..paths)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(4000 + case as u64 * 1_000_000 + i);
                let mut y = r0.sqrt();
                let mut integral = 0.0;
                for _ in 0..steps {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    let y_next = y + drift + vol * z;
                    integral += 0.5 * (y * y + y_next * y_next) * step;
                    y = y_next;
                }
                (-integral).exp()
            })
            .collect();
        let est = McEstimate::from_samples(&samples);
        let z = est.z_score(closed);
        assert!(
            z.abs() <= 3.0,
            "T={t_mat}: closed form {closed:.8} vs Euler {:.8} +- {:.8}, z={z:.2}",
            est.mean,
            est.std_error
        );
        println!("T={t_mat}: closed {closed:.7}, euler {:.7}, z={z:.2}", est.mean);
    }
}

#[test]
fn criterion_5_convolution_engine_matches_erlang_and_empirical_laws() {
    // Part one: n-fold convolutions of an exponential law against the
    // gamma closed form, n up to 10, across the bulk of the support.
    let rate = 1.3;
    let severity = Severity::Exponential { rate };
    let mut worst = 0.0f64;
    for j in 0..40 {
        let x = 0.05 + 19.95 * j as f64 / 39.0;
        let table = nfold_cdf_table(&severity, x, 10, 1 << 14, 1e-10).expect("fold table");
        assert!((table[0] - 1.0).abs() < 1e-12, "zero-fold cdf at {x} is {}", table[0]);
        for n in 1..=10usize {
            let reference = GammaDist::new(n as f64, rate).unwrap().cdf(x);
            worst = worst.max((table[n] - reference).abs());
        }
    }
    assert!(worst < 1e-6, "worst Erlang cdf error {worst:.2e}");

    // Part two: the compound Poisson cdf against the empirical cdf of
    // one million direct samples. The supremum distance is bounded by
    // the distance on a 512-point sample-quantile grid plus the maximal
    // empirical mass between neighbouring grid points.
    let lambda_t: f64 = 3.5;
    let sev = Severity::Exponential { rate: 0.9 };
    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5001);
    let poisson = rand_distr::Poisson::new(lambda_t).unwrap();
    let mut samples: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..n {
        let count = poisson.sample(&mut rng) as usize;
        let mut total = 0.0;
        for _ in 0..count {
            total += sev.sample(&mut rng).expect("severity sample");
        }
        samples.push(total);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let atom_hat = samples.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64;
    let atom = (-lambda_t).exp();
    let mut d_grid = (atom_hat - atom).abs();

    let grid_points = 512usize;
    let mut xs: Vec<f64> = (1..=grid_points)
        .map(|j| samples[(j * n / grid_points - 1).min(n - 1)])
        .filter(|&x| x > 0.0)
        .collect();
    xs.dedup();
    for &x in &xs {
        let f = compound_poisson_cdf(&sev, lambda_t, x, 1 << 13, 1e-10, 1e-12)
            .expect("compound cdf");
        let below = samples.partition_point(|&s| s <= x) as f64 / n as f64;
        let strictly_below = samples.partition_point(|&s| s < x) as f64 / n as f64;
        d_grid = d_grid.max((below - f).abs()).max((strictly_below - f).abs());
    }
    let ks_bound = d_grid + 2.0 / grid_points as f64;
    assert!(ks_bound < 0.01, "KS bound {ks_bound:.4} (grid distance {d_grid:.4})");
    println!("Erlang worst error {worst:.2e}, compound KS bound {ks_bound:.4}");
}

#[test]
fn criterion_6_price_surface_shape() {
    let grid = shared_grid();
    let total = |model: usize, d1: f64, d2: f64, nu: f64| -> f64 {
        grid.points
            .iter()
            .find(|p| {
                p.model_index == model && p.d1 == d1 && p.d2 == d2 && p.nu == nu
            })
            .expect("grid point")
            .analytic
            .total
    };

    for model in 0..4 {
        for &nu in &GRID_NUS {
            for &d2 in &GRID_THRESHOLDS {
                for pair in GRID_THRESHOLDS.windows(2) {
                    let lo = total(model, pair[0], d2, nu);
                    let hi = total(model, pair[1], d2, nu);
                    assert!(
                        hi >= lo - 1e-9,
                        "model {model}: price fell from {lo} to {hi} as d1 rose \
                         ({} -> {}) at d2={d2}, nu={nu}",
                        pair[0],
                        pair[1]
                    );
                }
            }
            for &d1 in &GRID_THRESHOLDS {
                for pair in GRID_THRESHOLDS.windows(2) {
                    let lo = total(model, d1, pair[0], nu);
                    let hi = total(model, d1, pair[1], nu);
                    assert!(
                        hi >= lo - 1e-9,
                        "model {model}: price fell from {lo} to {hi} as d2 rose \
                         ({} -> {}) at d1={d1}, nu={nu}",
                        pair[0],
                        pair[1]
                    );
                }
            }
        }
        for &d1 in &GRID_THRESHOLDS {
            for &d2 in &GRID_THRESHOLDS {
                for pair in GRID_NUS.windows(2) {
                    let lo_nu = total(model, d1, d2, pair[0]);
                    let hi_nu = total(model, d1, d2, pair[1]);
                    assert!(
                        hi_nu <= lo_nu + 1e-9,
                        "model {model}: price rose from {lo_nu} to {hi_nu} as nu rose \
                         ({} -> {}) at d1={d1}, d2={d2}",
                        pair[0],
                        pair[1]
                    );
                }
            }
        }
        // The retention exponent matters less when the trigger is
        // remote: the nu spread at the smallest thresholds must exceed
        // the spread at the largest.
        let spread_small = total(model, 0.4, 0.4, 0.2) - total(model, 0.4, 0.4, 0.8);
        let spread_large = total(model, 4.0, 4.0, 0.2) - total(model, 4.0, 4.0, 0.8);
        assert!(
            spread_small > spread_large,
            "model {model}: nu spread {spread_small:.6} at thresholds 0.4 is not larger \
             than {spread_large:.6} at thresholds 4"
        );
    }
    println!("monotone in both thresholds, antitone in nu, nu spread shrinks with thresholds");
}

#[test]
fn criterion_7_model_reductions_agree() {
    let num = NumericsConfig::default();
    let market = market();

    let close = |a: &PriceBreakdown, b: &PriceBreakdown, tol: f64, what: &str| {
        for (x, y, leg) in [
            (a.coupon_leg, b.coupon_leg, "coupon"),
            (a.conversion_leg, b.conversion_leg, "conversion"),
            (a.principal_leg, b.principal_leg, "principal"),
            (a.total, b.total, "total"),
        ] {
            assert!((x - y).abs() <= tol, "{what}: {leg} leg {x:.12} vs {y:.12}");
        }
    };

    // Two-region general form against each dedicated two-region law.
    for (mode, model) in [
        (RegionMode::Independent, example_models()[0].1.clone()),
        (RegionMode::CommonShock, example_models()[1].1.clone()),
    ] {
        let impact = impact_coefficients(DELTA, &model).expect("impact coefficients");
        for (d1, d2, nu) in [(0.4, 2.0, 0.5), (2.0, 2.0, 0.2)] {
            let cov = covenant(nu);
            let dedicated = price(&cov, &market, &model, &impact, d1, d2, &num).expect("price");
            let regions = [
                Region {
                    lambda: 1.4,
                    severity: region1_severity(),
                    threshold: d1,
                    impact: impact.alpha,
                },
                Region {
                    lambda: 1.4,
                    severity: region2_severity(),
                    threshold: d2,
                    impact: impact.beta,
                },
            ];
            let general =
                price_multi_region(&cov, &market, &regions, mode, &num).expect("price");
            close(&general, &dedicated, 1e-9, &format!("{mode:?} d1={d1} d2={d2} nu={nu}"));
        }
    }

    // With a single region the two dependence modes are the same law.
    let single = [Region {
        lambda: 1.4,
        severity: region2_severity(),
        threshold: 2.0,
        impact: 0.8,
    }];
    let cov = covenant(0.5);
    let one_a = price_multi_region(&cov, &market, &single, RegionMode::Independent, &num)
        .expect("price");
    let one_b = price_multi_region(&cov, &market, &single, RegionMode::CommonShock, &num)
        .expect("price");
    close(&one_a, &one_b, 1e-9, "single region");

    // A proportion concentrated on one point is the fixed-split model.
    let fixed = example_models()[2].1.clone();
    let impact = impact_coefficients(DELTA, &fixed).expect("impact coefficients");
    let fixed_price = price(&cov, &market, &fixed, &impact, 2.0, 2.0, &num).expect("price");
    for points in [vec![(0.38, 1.0)], vec![(0.38, 0.5), (0.38, 0.5)]] {
        let degenerate = LossModel::Proportional {
            lambda: 1.4,
            severity: total_severity(),
            proportion: Proportion::Discrete { points },
        };
        let impact_d = impact_coefficients(DELTA, &degenerate).expect("impact coefficients");
        let p = price(&cov, &market, &degenerate, &impact_d, 2.0, 2.0, &num).expect("price");
        close(&p, &fixed_price, 1e-10, "degenerate proportion");
    }

    // Full retention (nu = 1) leaves the loss law untilted and reduces
    // the conversion leg to the discounted trigger density, with no
    // drift correction under either exponent convention.
    let model = example_models()[1].1.clone();
    let impact = impact_coefficients(DELTA, &model).expect("impact coefficients");
    let base = trigger_law(&model, 2.0, 2.0, 5.0, None, &num).expect("trigger law");
    let tilted = trigger_law(
        &model,
        2.0,
        2.0,
        5.0,
        Some(&TiltSpec { alpha: impact.alpha, beta: impact.beta, nu: 1.0 }),
        &num,
    )
    .expect("trigger law");
    for &t in &[1.0, 2.5, 5.0] {
        assert!(
            (tilted.survival(t) - base.survival(t)).abs() <= 1e-12,
            "tilt at nu=1 moved the survival at t={t}"
        );
    }
    let cov_full = covenant(1.0);
    let engine = price(&cov_full, &market, &model, &impact, 2.0, 2.0, &num).expect("price");
    let reference = cov_full.conversion_fraction
        * cov_full.face
        * simpson(
            |t| zcb_price(market.r0, t, &market.rate).expect("bond price") * base.density(t),
            0.0,
            cov_full.maturity,
            4000,
        );
    assert!(
        (engine.conversion_leg - reference).abs() <= 1e-6,
        "conversion at nu=1: engine {:.10} vs discounted density integral {:.10}",
        engine.conversion_leg,
        reference
    );
    let squared_num = NumericsConfig {
        exponent_variant: ExponentVariant::Squared,
        ..NumericsConfig::default()
    };
    let engine_squared =
        price(&cov_full, &market, &model, &impact, 2.0, 2.0, &squared_num).expect("price");
    assert!(
        (engine.conversion_leg - engine_squared.conversion_leg).abs() <= 1e-12,
        "exponent variants must coincide at nu=1"
    );
    println!("two-region, single-region, degenerate-proportion, and full-retention reductions hold");
}

#[test]
fn criterion_8_calibration_recovers_synthetic_truth() {
    // Severity parameter recovery on ten thousand samples.
    let truth = total_severity();
    let mut rng = ChaCha8Rng::seed_from_u64(8001);
    let samples: Vec<f64> =
        (0..10_000).map(|_| truth.sample(&mut rng).expect("severity sample")).collect();
    let fit = fit_severity(&samples, SeverityFamily::LogNormal).expect("lognormal fit");
    let param = |name: &str| -> f64 {
        fit.params
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .1
    };
    assert!((param("mu") - (-1.477)).abs() < 0.05, "mu fitted as {}", param("mu"));
    assert!((param("sigma") - 0.902).abs() < 0.05, "sigma fitted as {}", param("sigma"));

    // Proportion recovery: the fitted beta mean must sit within 0.02 of
    // the true mean 0.38.
    let proportion = beta_proportion();
    let props: Vec<f64> =
        (0..10_000).map(|_| proportion.sample(&mut rng).expect("proportion sample")).collect();
    let (alpha_hat, beta_hat) = fit_beta(&props).expect("beta fit");
    let mean_hat = alpha_hat / (alpha_hat + beta_hat);
    assert!((mean_hat - 0.38).abs() < 0.02, "beta mean fitted as {mean_hat}");

    // Intensity recovery with a bootstrap interval on a synthetic
    // five-hundred-year window.
    let start = Date::new(1500, 1, 1).expect("date");
    let dataset = synthesize_proportional_dataset(1.4, &truth, &proportion, 500.0, start, 8003)
        .expect("synthetic dataset");
    let intensity = estimate_intensity(&dataset.event_times()).expect("intensity fit");
    let (lo, hi) = intensity_bootstrap_interval(
        intensity.lambda,
        dataset.window_years(),
        1000,
        0.95,
        8004,
    )
    .expect("bootstrap interval");
    assert!(
        lo <= 1.4 && 1.4 <= hi,
        "true intensity 1.4 outside the bootstrap interval [{lo:.3}, {hi:.3}] \
         around {:.3}",
        intensity.lambda
    );

    // End-to-end round trip: calibrate a proportional model on the
    // synthetic data, price it in closed form, and confirm the payoff
    // simulation of the calibrated model agrees within three standard
    // errors.
    let totals = dataset.total_losses();
    let severity_fit = fit_severity(&totals, SeverityFamily::LogNormal).expect("severity fit");
    let severity = severity_fit.severity.expect("pricing law");
    let beta_fit = fit_proportion(&dataset).expect("proportion fit");
    let model = LossModel::Proportional {
        lambda: intensity.lambda,
        severity,
        proportion: Proportion::Beta { alpha: beta_fit.alpha, beta: beta_fit.beta },
    };
    let impact = impact_coefficients(DELTA, &model).expect("impact coefficients");
    let cov = covenant(0.5);
    let analytic = price(&cov, &market(), &model, &impact, 2.0, 2.0, &NumericsConfig::default())
        .expect("price");
    let config = SimulationConfig { paths: 100_000, seed: 8005, step: 0.01 };
    let mc = simulate_price(&cov, &market(), &model, &impact, 2.0, 2.0, &config)
        .expect("simulate price");
    let z = mc.total.z_score(analytic.total);
    assert!(
        z.abs() <= 3.0,
        "round trip: analytic {:.6} vs mc {:.6} +- {:.6}, z={z:.2}",
        analytic.total,
        mc.total.mean,
        mc.total.std_error
    );
    println!(
        "lambda {:.3} in [{lo:.3}, {hi:.3}], beta mean {mean_hat:.3}, round-trip z {z:.2}",
        intensity.lambda
    );
}

#[test]
fn criterion_9_formula_variants_are_adjudicated_by_the_oracle() {
    let grid = shared_grid();
    let market = market();
    let models = example_models();

    // Candidate formula variants: the shipped default, the flipped
    // coupon accrual sign, and the squared retained-fraction exponent in
    // the conversion drift correction. The payoff simulation knows
    // nothing of either switch, so it arbitrates.
    //
    // Adjudication has two parts. Per point, the analytic total must
    // stay within three standard errors (with the same high-precision
    // retry as the price check). Across the grid, per-leg z-scores are
    // pooled as sum(z) / sqrt(count); a correct formula keeps the pooled
    // statistic within three as well, while a wrong formula shifts every
    // point the same way and is amplified by the pooling. The pooled
    // statistic is what separates the exponent variants: their gap at
    // one hundred thousand paths is below one standard error per point.
    struct Combo {
        coupon: CouponVariant,
        exponent: ExponentVariant,
        label: &'static str,
    }
    let combos = [
        Combo { coupon: CouponVariant::Minus, exponent: ExponentVariant::Linear, label: "minus/linear" },
        Combo { coupon: CouponVariant::Plus, exponent: ExponentVariant::Linear, label: "plus/linear" },
        Combo { coupon: CouponVariant::Minus, exponent: ExponentVariant::Squared, label: "minus/squared" },
    ];

    let mut rows = Vec::new();
    for combo in &combos {
        let num = NumericsConfig {
            coupon_variant: combo.coupon,
            exponent_variant: combo.exponent,
            ..NumericsConfig::default()
        };
        let default_combo = combo.coupon == CouponVariant::Minus
            && combo.exponent == ExponentVariant::Linear;
        let mut per_point_failures = 0usize;
        let mut worst_total_z = 0.0f64;
        let mut sum_coupon_z = 0.0;
        let mut sum_conversion_z = 0.0;
        let mut count = 0usize;
        for p in &grid.points {
            let analytic = if default_combo {
                None
            } else {
                let model = &models[p.model_index].1;
                let impact = impact_coefficients(DELTA, model).expect("impact coefficients");
                Some(
                    price(&covenant(p.nu), &market, model, &impact, p.d1, p.d2, &num)
                        .expect("price"),
                )
            };
            let analytic = analytic.as_ref().unwrap_or(&p.analytic);
            let z_total = p.mc.total.z_score(analytic.total);
            worst_total_z = worst_total_z.max(z_total.abs());
            if z_total.abs() > 3.0 {
                let retry = retry_point(p);
                if retry.total.z_score(analytic.total).abs() > 3.0 {
                    per_point_failures += 1;
                }
            }
            sum_coupon_z += p.mc.coupon_leg.z_score(analytic.coupon_leg);
            sum_conversion_z += p.mc.conversion_leg.z_score(analytic.conversion_leg);
            count += 1;
        }
        let pooled_coupon = sum_coupon_z / (count as f64).sqrt();
        let pooled_conversion = sum_conversion_z / (count as f64).sqrt();
        let passes = per_point_failures == 0
            && pooled_coupon.abs() <= 3.0
            && pooled_conversion.abs() <= 3.0;
        println!(
            "{}: per-point failures {}, worst |z| {:.1}, pooled coupon z {:+.2}, \
             pooled conversion z {:+.2} -> {}",
            combo.label,
            per_point_failures,
            worst_total_z,
            pooled_coupon,
            pooled_conversion,
            if passes { "pass" } else { "fail" }
        );
        rows.push(serde_json::json!({
            "coupon_variant": match combo.coupon {
                CouponVariant::Minus => "minus",
                CouponVariant::Plus => "plus",
            },
            "exponent_variant": match combo.exponent {
                ExponentVariant::Linear => "linear",
                ExponentVariant::Squared => "squared",
            },
            "points": count,
            "per_point_failures": per_point_failures,
            "worst_total_z": worst_total_z,
            "pooled_coupon_z": pooled_coupon,
            "pooled_conversion_z": pooled_conversion,
            "passes": passes,
        }));
    }

    let passes: Vec<bool> =
        rows.iter().map(|r| r["passes"].as_bool().expect("passes flag")).collect();
    let report = serde_json::json!({
        "suite": "formula variant adjudication",
        "grid": {
            "models": models.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            "thresholds": GRID_THRESHOLDS,
            "nu": GRID_NUS,
            "paths": GRID_PATHS,
        },
        "method": {
            "per_point": "analytic total within 3 Monte Carlo standard errors at every grid \
                          point, with a single 8x-path retry for isolated excursions",
            "pooled": "per-leg z-scores summed over the grid and divided by sqrt(points); \
                       a variant passes only if the pooled coupon and conversion statistics \
                       also stay within 3",
        },
        "variants": rows,
        "selected": {"coupon_variant": "minus", "exponent_variant": "linear"},
    });
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("validation-report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("serialize report"))
        .expect("write report");
    println!("validation report written to {}", path.display());

    assert!(passes[0], "the shipped variant pair failed its own oracle check");
    assert!(!passes[1], "the flipped coupon sign was not rejected");
    assert!(!passes[2], "the squared exponent was not rejected");
}
