//! Exact-GP log marginal likelihood and its gradient in log-hyperparameter
//! space.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::gram;
use super::GpHyperparams;
use crate::error::{Error, Result};

/// First jitter tried, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried, relative to the mean diagonal.
pub const JITTER_MAX: f64 = 1e-4;

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute jitter that was added to the diagonal (0 if none).
    pub jitter: f64,
}

/// Cholesky of a symmetric matrix, escalating diagonal jitter by ×10 from
/// `1e-10` up to `1e-4` of the mean diagonal until it succeeds.
pub(crate) fn factorize(k: DMatrix<f64>) -> Result<Factor> {
    if let Some(chol) = Cholesky::new(k.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let n = k.nrows().max(1);
    let mean_diag = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    let mut jitter = rel * mean_diag;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        jitter = rel * mean_diag;
        let mut kj = k.clone();
        for i in 0..k.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(kj) {
            log::debug!("cholesky needed jitter {jitter:.3e} ({rel:.0e} of mean diagonal)");
            return Ok(Factor { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::Conditioning { jitter })
}

pub(crate) fn noisy_gram(xs: &[Vec<f64>], hp: &GpHyperparams) -> (DMatrix<f64>, DMatrix<f64>) {
    let kf = gram(xs, hp);
    let mut k = kf.clone();
    let sn2 = hp.noise_sd * hp.noise_sd;
    for i in 0..xs.len() {
        k[(i, i)] += sn2;
    }
    (kf, k)
}

fn check(xs: &[Vec<f64>], ys: &[f64], hp: &GpHyperparams) -> Result<()> {
    hp.validate()?;
    if xs.is_empty() {
        return Err(Error::input("need at least one training point"));
    }
    if xs.len() != ys.len() {
        return Err(Error::input(format!(
            "{} inputs but {} targets",
            xs.len(),
            ys.len()
        )));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != hp.dim()) {
        return Err(Error::input(format!(
            "input of dimension {} does not match {} lengthscales",
            x.len(),
            hp.dim()
        )));
    }
    Ok(())
}

fn value_from(factor: &Factor, alpha: &DVector<f64>, ys: &DVector<f64>) -> f64 {
    let n = ys.len() as f64;
    let log_det_half: f64 = factor
        .chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum();
    -0.5 * ys.dot(alpha) - log_det_half - 0.5 * n * (2.0 * PI).ln()
}

/// Log marginal likelihood only; skips the inverse needed for gradients.
pub(crate) fn lml_value(xs: &[Vec<f64>], ys: &[f64], hp: &GpHyperparams) -> Result<f64> {
    check(xs, ys, hp)?;
    let (_, k) = noisy_gram(xs, hp);
    let factor = factorize(k)?;
    let y = DVector::from_column_slice(ys);
    let alpha = factor.chol.solve(&y);
    Ok(value_from(&factor, &alpha, &y))
}

/// `log p(y | X, θ)` and its gradient with respect to
/// `[ln σ_f, ln ℓ_1, …, ln ℓ_D, ln σ_n]`.
///
/// Uses `∂L/∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)` with `α = K⁻¹y`.
pub fn log_marginal_likelihood(
    xs: &[Vec<f64>],
    ys: &[f64],
    hp: &GpHyperparams,
) -> Result<(f64, Vec<f64>)> {
    check(xs, ys, hp)?;
    let n = xs.len();
    let dim = hp.dim();
    let (kf, k) = noisy_gram(xs, hp);
    let factor = factorize(k)?;
    let y = DVector::from_column_slice(ys);
    let alpha = factor.chol.solve(&y);
    let value = value_from(&factor, &alpha, &y);

    // W = ααᵀ − K⁻¹
    let mut w = factor.chol.inverse();
    for j in 0..n {
        for i in 0..n {
            w[(i, j)] = alpha[i] * alpha[j] - w[(i, j)];
        }
    }

    // ∂K/∂ln σ_f = 2K_f, ∂K/∂ln ℓ_d = K_f ∘ Δ_d²/ℓ_d², ∂K/∂ln σ_n = 2σ_n² I
    let mut grad = vec![0.0; dim + 2];
    let inv_l2: Vec<f64> = hp.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let mut trace_w = 0.0;
    for i in 0..n {
        trace_w += w[(i, i)];
        grad[0] += w[(i, i)] * kf[(i, i)];
        for j in 0..i {
            let wk = (w[(i, j)] + w[(j, i)]) * kf[(i, j)];
            grad[0] += wk;
            for d in 0..dim {
                let r = xs[i][d] - xs[j][d];
                grad[1 + d] += 0.5 * wk * r * r * inv_l2[d];
            }
        }
    }
    grad[dim + 1] = hp.noise_sd * hp.noise_sd * trace_w;
    Ok((value, grad))
}
