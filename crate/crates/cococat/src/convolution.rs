//! Grid-based n-fold convolutions of severity laws and compound Poisson
//! distribution functions.
//!
//! Each cell of a uniform grid carries the exact severity mass between its
//! edges, attributed to the cell midpoint, and cells are convolved by FFT
//! with zero padding to twice the grid length, so the linear convolution
//! of positively supported laws is computed without wraparound. The n-fold
//! density samples live on a grid shifted by n half-cells, and the partial
//! sums below a threshold account for that shift.
//!
//! The grid spans [0, threshold] only: severities are positive, so mass
//! that has escaped past the threshold in some fold can never return
//! below it in a later fold, and dropping it is exact for distribution
//! values at the threshold. Restricting the domain this way puts the
//! whole resolution budget where the evaluation happens, which matters
//! for heavy-tailed severities whose high quantiles dwarf the threshold.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::distributions::Severity;
use crate::error::{invalid, tolerance, Result};

/// Upper bound on the grid refinement used when the requested threshold
/// forces a wide domain.
const MAX_POINTS: usize = 1 << 20;

/// Distribution functions of the n-fold convolutions of a severity law,
/// evaluated at one threshold: entry n holds F^{n*}(threshold) for
/// n = 0, ..., n_max. `tail` bounds the mass ignored by the shortcut
/// taken when all n_max summands almost surely stay below the threshold.
pub fn nfold_cdf_table(
    severity: &Severity,
    threshold: f64,
    n_max: usize,
    points: usize,
    tail: f64,
) -> Result<Vec<f64>> {
    severity.validate()?;
    if !threshold.is_finite() {
        return Err(invalid(format!("threshold must be finite, got {threshold}")));
    }
    if !points.is_power_of_two() || points < 1 << 8 || points > MAX_POINTS {
        return Err(invalid(format!(
            "grid points must be a power of two in [{}, {MAX_POINTS}], got {points}",
            1 << 8
        )));
    }
    if !(tail > 0.0 && tail < 1e-3) {
        return Err(invalid(format!("grid tail must lie in (0, 1e-3), got {tail}")));
    }

    // Convolutions of positively supported laws put no mass at or below
    // zero, so only the zero-fold term survives a nonpositive threshold.
    let mut table = vec![0.0; n_max + 1];
    table[0] = if threshold >= 0.0 { 1.0 } else { 0.0 };
    if n_max == 0 || threshold <= 0.0 {
        return Ok(table);
    }
    table[1] = severity.cdf(threshold)?;
    if n_max == 1 {
        return Ok(table);
    }

    // If even n_max summands almost surely stay below the threshold, the
    // union bound pins every entry at the one-fold value to within the
    // tolerated tail mass and the grid work can be skipped entirely.
    let sf_each = severity.sf(threshold / n_max as f64)?;
    if (n_max as f64) * sf_each <= tail.min(1e-13) {
        let f1 = table[1];
        for item in table.iter_mut().skip(2) {
            *item = f1;
        }
        return Ok(table);
    }

    let x_hi = threshold * (1.0 + 1e-9);

    // Widen the grid if the domain is so stretched that the bulk of the
    // severity would be resolved by too few cells.
    let bulk = (severity.quantile(0.95)? - severity.quantile(0.05)?).max(1e-12);
    let mut points_eff = points;
    while x_hi / points_eff as f64 > bulk / 16.0 {
        points_eff *= 2;
        if points_eff > MAX_POINTS {
            return Err(tolerance(format!(
                "threshold {threshold} stretches the convolution grid beyond {MAX_POINTS} cells"
            )));
        }
    }
    let g = points_eff;
    let h = x_hi / g as f64;

    // Exact cell masses from distribution-function differences. The grid
    // then carries the true mass of every cell no matter how sharply the
    // density peaks inside one, and the total mass on the domain matches
    // the distribution function by construction.
    let edges: Vec<f64> = (1..=g).map(|j| j as f64 * h).collect();
    let edge_cdf = severity.cdf_grid(&edges)?;
    let mut density = Vec::with_capacity(g);
    let mut prev = 0.0;
    for &c in &edge_cdf {
        density.push(((c - prev) / h).max(0.0));
        prev = c;
    }

    let len = 2 * g;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    // Spectrum of the one-fold density, pre-scaled by the cell width so a
    // spectral product performs one convolution step.
    let mut base_hat: Vec<Complex<f64>> = density
        .iter()
        .map(|&v| Complex::new(v * h, 0.0))
        .chain(std::iter::repeat_n(Complex::new(0.0, 0.0), len - g))
        .collect();
    fwd.process(&mut base_hat);

    let mut current_hat = base_hat.clone();
    // base_hat was scaled by h, so current_hat holds h * f-hat; dividing by
    // h once keeps the one-fold normalization consistent with later steps.
    for v in current_hat.iter_mut() {
        *v /= h;
    }

    let mut work = vec![Complex::new(0.0, 0.0); len];
    for n in 2..=n_max {
        for (c, b) in current_hat.iter_mut().zip(&base_hat) {
            *c *= b;
        }
        work.copy_from_slice(&current_hat);
        inv.process(&mut work);
        let scale = 1.0 / len as f64;
        // Real-space samples of the n-fold density at (j + n/2) h. Clip
        // negative ringing and cap the total mass at one; mass genuinely
        // escaping past the domain end is not restored.
        let mut real: Vec<f64> = work[..g].iter().map(|c| (c.re * scale).max(0.0)).collect();
        let total = real.iter().sum::<f64>() * h;
        if total > 1.0 {
            let inv_total = 1.0 / total;
            for v in real.iter_mut() {
                *v *= inv_total;
            }
        }
        table[n] = shifted_partial_integral(&real, h, n, threshold);

        if n < n_max {
            for (dst, &src) in work.iter_mut().take(g).zip(&real) {
                *dst = Complex::new(src, 0.0);
            }
            for dst in work.iter_mut().skip(g) {
                *dst = Complex::new(0.0, 0.0);
            }
            fwd.process(&mut work);
            // The invariant at the top of the loop is that current_hat
            // transforms to density heights while base_hat carries the
            // cell-mass scaling, so the clipped spectrum is copied as is.
            current_hat.copy_from_slice(&work);
        }
    }
    Ok(table)
}

/// Integral of piecewise-constant density samples located at
/// (j + n/2) h up to the threshold.
fn shifted_partial_integral(samples: &[f64], h: f64, n: usize, threshold: f64) -> f64 {
    let offset = n as f64 / 2.0;
    let mut acc = 0.0;
    for (j, &c) in samples.iter().enumerate() {
        let left = (j as f64 + offset - 0.5) * h;
        let right = left + h;
        if right <= threshold {
            acc += c * h;
        } else {
            if threshold > left {
                acc += c * (threshold - left);
            }
            break;
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Convenience wrapper evaluating a single n-fold distribution function.
pub fn nfold_cdf(severity: &Severity, n: usize, x: f64, points: usize, tail: f64) -> Result<f64> {
    Ok(*nfold_cdf_table(severity, x, n, points, tail)?
        .last()
        .expect("table is never empty"))
}

/// Poisson probabilities for mean `lambda_t`, truncated once the missed
/// tail drops below `tail`.
pub fn poisson_weights(lambda_t: f64, tail: f64) -> Result<Vec<f64>> {
    if !(lambda_t.is_finite() && lambda_t >= 0.0) {
        return Err(invalid(format!("poisson mean must be nonnegative, got {lambda_t}")));
    }
    if lambda_t > 500.0 {
        return Err(tolerance(format!(
            "poisson mean {lambda_t} exceeds the supported range for direct weights"
        )));
    }
    if !(tail > 0.0 && tail < 1e-3) {
        return Err(invalid(format!("poisson tail must lie in (0, 1e-3), got {tail}")));
    }
    if lambda_t == 0.0 {
        return Ok(vec![1.0]);
    }
    let cap = (lambda_t + 40.0 * lambda_t.sqrt() + 60.0) as usize;
    let mut weights = Vec::with_capacity(32);
    let mut w = (-lambda_t).exp();
    let mut cumulative = w;
    weights.push(w);
    for n in 1..=cap {
        w *= lambda_t / n as f64;
        weights.push(w);
        cumulative += w;
        if 1.0 - cumulative <= tail {
            return Ok(weights);
        }
    }
    Err(tolerance(format!(
        "poisson weights for mean {lambda_t} did not reach tail {tail} within {cap} terms"
    )))
}

/// Distribution function of a compound Poisson sum at x: the Poisson
/// mixture of n-fold severity convolutions. The truncated Poisson tail
/// contributes an absolute error below `poisson_tail`.
pub fn compound_poisson_cdf(
    severity: &Severity,
    lambda_t: f64,
    x: f64,
    points: usize,
    grid_tail: f64,
    poisson_tail: f64,
) -> Result<f64> {
    let weights = poisson_weights(lambda_t, poisson_tail)?;
    let table = nfold_cdf_table(severity, x, weights.len() - 1, points, grid_tail)?;
    let mut acc = 0.0;
    for (w, f) in weights.iter().zip(&table) {
        acc += w * f;
    }
    Ok(acc.clamp(0.0, 1.0))
}
