//! Squared-exponential kernel with one lengthscale per input dimension.

use nalgebra::DMatrix;

use super::GpHyperparams;
use crate::error::{Error, Result};

/// `σ_f² · exp(−½ Σ_d ((x_d − x'_d) / ℓ_d)²)`.
pub fn se_kernel(x: &[f64], x2: &[f64], hp: &GpHyperparams) -> Result<f64> {
    let dim = hp.lengthscales.len();
    if x.len() != dim || x2.len() != dim {
        return Err(Error::input(format!(
            "kernel inputs have dimensions {} and {}, lengthscales have {}",
            x.len(),
            x2.len(),
            dim
        )));
    }
    Ok(se_unchecked(x, x2, hp))
}

#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let r = (a - b) / l;
            r * r
        })
        .sum()
}

#[inline]
pub(crate) fn se_unchecked(x: &[f64], x2: &[f64], hp: &GpHyperparams) -> f64 {
    hp.signal_sd * hp.signal_sd * (-0.5 * scaled_sq_dist(x, x2, &hp.lengthscales)).exp()
}

/// Noise-free Gram matrix over `xs`.
pub(crate) fn gram(xs: &[Vec<f64>], hp: &GpHyperparams) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    let sf2 = hp.signal_sd * hp.signal_sd;
    for i in 0..n {
        k[(i, i)] = sf2;
        for j in 0..i {
            let v = se_unchecked(&xs[i], &xs[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance with training points as rows and queries as columns.
pub(crate) fn cross(train: &[Vec<f64>], queries: &[Vec<f64>], hp: &GpHyperparams) -> DMatrix<f64> {
    DMatrix::from_fn(train.len(), queries.len(), |i, j| {
        se_unchecked(&train[i], &queries[j], hp)
    })
}
