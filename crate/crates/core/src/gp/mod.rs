//! Exact Gaussian-process regression with a zero-mean prior and an ARD
//! squared-exponential kernel.
//!
//! Inputs and targets are standardized before fitting, so the zero-mean
//! prior and all hyperparameters live in standardized units. Predictions
//! are returned in the original units.
//!
//! Hyperparameters are chosen by maximizing the log marginal likelihood
//! with multi-start projected gradient ascent in log space.

mod kernel;
mod likelihood;
mod optimize;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kernel::se_kernel;
pub use likelihood::{log_marginal_likelihood, JITTER_MAX, JITTER_START};

use crate::error::{Error, Result};
use likelihood::{factorize, lml_value, noisy_gram};
use optimize::{ascend, AscentSettings};

pub const FORMAT_VERSION: u32 = 1;

/// Kernel and noise parameters. All values are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub signal_sd: f64,
    pub lengthscales: Vec<f64>,
    pub noise_sd: f64,
}

impl GpHyperparams {
    pub fn new(signal_sd: f64, lengthscales: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let hp = GpHyperparams {
            signal_sd,
            lengthscales,
            noise_sd,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Unit signal and lengthscales in every dimension, noise sd 0.1.
    pub fn isotropic(dim: usize) -> Self {
        GpHyperparams {
            signal_sd: 1.0,
            lengthscales: vec![1.0; dim],
            noise_sd: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.lengthscales.is_empty() {
            return Err(Error::input("at least one lengthscale is required"));
        }
        if !positive(self.signal_sd)
            || !positive(self.noise_sd)
            || !self.lengthscales.iter().all(|&l| positive(l))
        {
            return Err(Error::input(format!(
                "hyperparameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `[ln σ_f, ln ℓ_1, …, ln ℓ_D, ln σ_n]`
    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.signal_sd.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .chain(std::iter::once(self.noise_sd.ln()))
            .collect()
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyperparams {
            signal_sd: theta[0].exp(),
            lengthscales: theta[1..=d].iter().map(|v| v.exp()).collect(),
            noise_sd: theta[d + 1].exp(),
        }
    }
}

/// Box constraints on hyperparameters, in natural (not log) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperparamBounds {
    pub signal_sd: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise_sd: (f64, f64),
}

impl Default for HyperparamBounds {
    fn default() -> Self {
        HyperparamBounds {
            signal_sd: (1e-3, 1e2),
            lengthscale: (1e-2, 1e3),
            noise_sd: (1e-3, 1e1),
        }
    }
}

impl HyperparamBounds {
    fn log_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.signal_sd.0.ln()];
        let mut hi = vec![self.signal_sd.1.ln()];
        lo.extend(std::iter::repeat_n(self.lengthscale.0.ln(), dim));
        hi.extend(std::iter::repeat_n(self.lengthscale.1.ln(), dim));
        lo.push(self.noise_sd.0.ln());
        hi.push(self.noise_sd.1.ln());
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Number of starting points; the first is the supplied initial guess,
    /// the rest are log-uniform draws.
    pub restarts: usize,
    pub max_iters: usize,
    pub ftol: f64,
    pub seed: u64,
    pub standardize: bool,
    /// When false the initial hyperparameters are used as given.
    pub optimize: bool,
    /// Optimize hyperparameters on at most this many points (a seeded
    /// subsample); the returned model still conditions on every point.
    pub max_opt_points: Option<usize>,
    pub bounds: HyperparamBounds,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 5,
            max_iters: 200,
            ftol: 1e-9,
            seed: 0,
            standardize: true,
            optimize: true,
            max_opt_points: None,
            bounds: HyperparamBounds::default(),
        }
    }
}

/// Per-dimension affine maps from original to standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    // constant columns are centred but left unscaled
    (
        mean,
        if sd > 1e-12 * (1.0 + mean.abs()) {
            sd
        } else {
            1.0
        },
    )
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization {
            input_mean: vec![0.0; dim],
            input_sd: vec![1.0; dim],
            target_mean: 0.0,
            target_sd: 1.0,
        }
    }

    pub fn from_data(xs: &[Vec<f64>], ys: &[f64]) -> Self {
        let dim = xs[0].len();
        let (input_mean, input_sd) = (0..dim)
            .map(|d| mean_sd(xs.iter().map(move |x| x[d])))
            .unzip();
        let (target_mean, target_sd) = mean_sd(ys.iter().copied());
        Standardization {
            input_mean,
            input_sd,
            target_mean,
            target_sd,
        }
    }

    pub fn input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_sd
    }

    pub fn restore_target(&self, z: f64) -> f64 {
        z * self.target_sd + self.target_mean
    }

    pub fn restore_input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_mean.iter().zip(&self.input_sd))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    /// `None` when the start point could not be evaluated.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub restarts: Vec<RestartOutcome>,
    pub best_restart: usize,
    /// Log marginal likelihood of the returned hyperparameters on the full
    /// (standardized) training set.
    pub objective: f64,
    pub jitter: f64,
    pub n_train: usize,
    pub n_opt: usize,
}

/// A GP conditioned on its training set. Immutable; safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    hyperparams: GpHyperparams,
    standardization: Standardization,
    /// Standardized inputs, one row per training point.
    inputs: Vec<Vec<f64>>,
    /// Standardized targets.
    targets: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    report: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Latent-function variance (no observation noise), in squared output units.
    pub variance: Vec<f64>,
    /// Variances that came out below `-1e-10` before being clamped to 0.
    pub clamped: usize,
}

fn validate_data(xs: &[Vec<f64>], ys: &[f64]) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::input("no training points"));
    }
    if xs.len() != ys.len() {
        return Err(Error::input(format!(
            "{} inputs but {} targets",
            xs.len(),
            ys.len()
        )));
    }
    let dim = xs[0].len();
    if dim == 0 {
        return Err(Error::input("inputs must have at least one dimension"));
    }
    for x in xs {
        if x.len() != dim {
            return Err(Error::input("training inputs have inconsistent dimensions"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("training inputs must be finite"));
        }
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("training targets must be finite"));
    }
    Ok(dim)
}

/// Deterministic subsample of `n` indices out of `total`, in ascending order.
pub(crate) fn subsample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    if n >= total {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    idx
}

impl TrainedGp {
    /// Conditions on `(xs, ys)` with fixed hyperparameters (no optimization).
    pub fn condition(
        xs: &[Vec<f64>],
        ys: &[f64],
        hyperparams: GpHyperparams,
        standardize: bool,
    ) -> Result<Self> {
        let dim = validate_data(xs, ys)?;
        hyperparams.validate()?;
        if hyperparams.dim() != dim {
            return Err(Error::input(format!(
                "{} lengthscales for {}-dimensional inputs",
                hyperparams.dim(),
                dim
            )));
        }
        let standardization = if standardize {
            Standardization::from_data(xs, ys)
        } else {
            Standardization::identity(dim)
        };
        let inputs: Vec<Vec<f64>> = xs.iter().map(|x| standardization.input(x)).collect();
        let targets: Vec<f64> = ys.iter().map(|&y| standardization.target(y)).collect();
        Self::from_standardized(hyperparams, standardization, inputs, targets, None)
    }

    fn from_standardized(
        hyperparams: GpHyperparams,
        standardization: Standardization,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        report: Option<FitReport>,
    ) -> Result<Self> {
        let (_, k) = noisy_gram(&inputs, &hyperparams);
        let factor = factorize(k)?;
        let alpha = factor.chol.solve(&DVector::from_column_slice(&targets));
        Ok(TrainedGp {
            hyperparams,
            standardization,
            inputs,
            targets,
            chol: factor.chol,
            alpha,
            jitter: factor.jitter,
            report,
        })
    }

    /// Standardizes the data, maximizes the log marginal likelihood from
    /// several starting points and conditions on the full data set with the
    /// best hyperparameters found.
    pub fn fit(
        xs: &[Vec<f64>],
        ys: &[f64],
        init: &GpHyperparams,
        opts: &FitOptions,
    ) -> Result<Self> {
        if !opts.optimize {
            return Self::condition(xs, ys, init.clone(), opts.standardize);
        }
        let dim = validate_data(xs, ys)?;
        if xs.len() < 2 {
            return Err(Error::Fit(format!(
                "hyperparameter optimization needs at least 2 points, got {}",
                xs.len()
            )));
        }
        init.validate()?;
        if init.dim() != dim {
            return Err(Error::input(format!(
                "{} initial lengthscales for {}-dimensional inputs",
                init.dim(),
                dim
            )));
        }
        if opts.restarts == 0 {
            return Err(Error::input("at least one restart is required"));
        }

        let standardization = if opts.standardize {
            Standardization::from_data(xs, ys)
        } else {
            Standardization::identity(dim)
        };
        let inputs: Vec<Vec<f64>> = xs.iter().map(|x| standardization.input(x)).collect();
        let targets: Vec<f64> = ys.iter().map(|&y| standardization.target(y)).collect();

        let opt_idx = subsample_indices(
            inputs.len(),
            opts.max_opt_points.unwrap_or(usize::MAX).max(2),
            opts.seed ^ 0x5eed_0b5e,
        );
        let opt_x: Vec<Vec<f64>> = opt_idx.iter().map(|&i| inputs[i].clone()).collect();
        let opt_y: Vec<f64> = opt_idx.iter().map(|&i| targets[i]).collect();

        let (lower, upper) = opts.bounds.log_box(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let starts: Vec<Vec<f64>> = (0..opts.restarts)
            .map(|r| {
                if r == 0 {
                    init.to_log()
                } else {
                    let mut theta = vec![rng.random_range(0.3f64.ln()..3.0f64.ln())];
                    theta.extend((0..dim).map(|_| rng.random_range(0.3f64.ln()..10.0f64.ln())));
                    theta.push(rng.random_range(0.01f64.ln()..0.5f64.ln()));
                    theta
                }
            })
            .collect();

        let settings = AscentSettings {
            max_iters: opts.max_iters,
            ftol: opts.ftol,
            xtol: 1e-8,
        };
        let eval = |theta: &[f64]| {
            log_marginal_likelihood(&opt_x, &opt_y, &GpHyperparams::from_log(theta))
        };
        let value = |theta: &[f64]| lml_value(&opt_x, &opt_y, &GpHyperparams::from_log(theta));

        let mut outcomes = Vec::with_capacity(starts.len());
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (r, start) in starts.iter().enumerate() {
            match ascend(eval, value, start, &lower, &upper, settings) {
                Ok(out) => {
                    log::debug!(
                        "restart {r}: objective {:.6} after {} iterations",
                        out.value,
                        out.iterations
                    );
                    if best.as_ref().is_none_or(|(_, v, _)| out.value > *v) {
                        best = Some((r, out.value, out.x.clone()));
                    }
                    outcomes.push(RestartOutcome {
                        objective: Some(out.value),
                        iterations: out.iterations,
                        converged: out.converged,
                    });
                }
                Err(e) => {
                    log::debug!("restart {r} failed: {e}");
                    outcomes.push(RestartOutcome {
                        objective: None,
                        iterations: 0,
                        converged: false,
                    });
                }
            }
        }
        let Some((best_restart, _, theta)) = best else {
            return Err(Error::Fit(format!(
                "all {} restarts failed to factorize the covariance",
                opts.restarts
            )));
        };
        let hyperparams = GpHyperparams::from_log(&theta);
        let objective = lml_value(&inputs, &targets, &hyperparams).map_err(|e| {
            Error::Fit(format!(
                "best hyperparameters do not condition the full data: {e}"
            ))
        })?;
        let report = FitReport {
            restarts: outcomes,
            best_restart,
            objective,
            jitter: 0.0,
            n_train: inputs.len(),
            n_opt: opt_x.len(),
        };
        let mut gp =
            Self::from_standardized(hyperparams, standardization, inputs, targets, Some(report))?;
        if let Some(r) = gp.report.as_mut() {
            r.jitter = gp.jitter;
        }
        Ok(gp)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.dim()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower Cholesky factor of `K + σ_n² I` (plus any jitter).
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `K + σ_n² I + jitter·I` over the standardized training inputs.
    pub fn training_covariance(&self) -> DMatrix<f64> {
        let (_, mut k) = noisy_gram(&self.inputs, &self.hyperparams);
        for i in 0..k.nrows() {
            k[(i, i)] += self.jitter;
        }
        k
    }

    pub fn standardized_targets(&self) -> &[f64] {
        &self.targets
    }

    fn check_queries(&self, xs: &[Vec<f64>]) -> Result<()> {
        if let Some(x) = xs.iter().find(|x| x.len() != self.dim()) {
            return Err(Error::input(format!(
                "query of dimension {} for a {}-dimensional model",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Posterior mean at a single point, skipping the variance solve.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_queries(std::slice::from_ref(&x.to_vec()))?;
        let z = self.standardization.input(x);
        let k = kernel::cross(&self.inputs, std::slice::from_ref(&z), &self.hyperparams);
        Ok(self
            .standardization
            .restore_target(k.column(0).dot(&self.alpha)))
    }

    /// Posterior mean and latent variance at each query point.
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Prediction> {
        self.check_queries(xs)?;
        if xs.is_empty() {
            return Ok(Prediction {
                mean: Vec::new(),
                variance: Vec::new(),
                clamped: 0,
            });
        }
        let zs: Vec<Vec<f64>> = xs.iter().map(|x| self.standardization.input(x)).collect();
        let k_star = kernel::cross(&self.inputs, &zs, &self.hyperparams);
        // column-wise dots keep each query's result independent of the others
        let mean = (0..zs.len())
            .map(|j| {
                self.standardization
                    .restore_target(k_star.column(j).dot(&self.alpha))
            })
            .collect();
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Invariant("singular Cholesky factor".into()))?;
        let sf2 = self.hyperparams.signal_sd * self.hyperparams.signal_sd;
        let scale = self.standardization.target_sd * self.standardization.target_sd;
        let mut clamped = 0;
        let variance = (0..zs.len())
            .map(|j| {
                let var = sf2 - v.column(j).norm_squared();
                if var < -1e-10 {
                    clamped += 1;
                }
                var.max(0.0) * scale
            })
            .collect();
        if clamped > 0 {
            log::warn!(
                "{clamped} predictive variances were negative beyond -1e-10 and clamped to 0"
            );
        }
        Ok(Prediction {
            mean,
            variance,
            clamped,
        })
    }

    pub fn to_file(&self) -> GpFile {
        GpFile {
            format_version: FORMAT_VERSION,
            hyperparams: self.hyperparams.clone(),
            standardization: self.standardization.clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            alpha_checksum: AlphaChecksum::of(&self.alpha),
            report: self.report.clone(),
        }
    }

    /// Rebuilds the model, refactorizing the covariance and checking that the
    /// recomputed weights match the stored checksum to `1e-10`.
    pub fn from_file(file: GpFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::input(format!(
                "unsupported GP format version {}",
                file.format_version
            )));
        }
        let dim = validate_data(&file.inputs, &file.targets)?;
        file.hyperparams.validate()?;
        if file.hyperparams.dim() != dim
            || file.standardization.input_mean.len() != dim
            || file.standardization.input_sd.len() != dim
        {
            return Err(Error::input("GP file dimensions are inconsistent"));
        }
        let gp = Self::from_standardized(
            file.hyperparams,
            file.standardization,
            file.inputs,
            file.targets,
            file.report,
        )?;
        let recomputed = AlphaChecksum::of(&gp.alpha);
        if !recomputed.matches(&file.alpha_checksum, 1e-10) {
            return Err(Error::input(format!(
                "alpha checksum mismatch: stored {:?}, recomputed {:?}",
                file.alpha_checksum, recomputed
            )));
        }
        Ok(gp)
    }
}

/// Serialized form of a [`TrainedGp`]. The Cholesky factor is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFile {
    pub format_version: u32,
    pub hyperparams: GpHyperparams,
    pub standardization: Standardization,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub alpha_checksum: AlphaChecksum,
    #[serde(default)]
    pub report: Option<FitReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChecksum {
    pub sum: f64,
    pub abs_sum: f64,
}

impl AlphaChecksum {
    fn of(alpha: &DVector<f64>) -> Self {
        AlphaChecksum {
            sum: alpha.iter().sum(),
            abs_sum: alpha.iter().map(|a| a.abs()).sum(),
        }
    }

    fn matches(&self, other: &AlphaChecksum, tol: f64) -> bool {
        let scale = self.abs_sum.max(other.abs_sum).max(1.0);
        (self.sum - other.sum).abs() <= tol * scale
            && (self.abs_sum - other.abs_sum).abs() <= tol * scale
    }
}
