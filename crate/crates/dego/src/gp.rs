//! Ordinary Kriging: marginal-likelihood training and Gaussian prediction.
//!
//! The model places a GP prior with unknown constant trend μ on the latent
//! function and Gaussian noise σ² on the observations, so the marginal
//! likelihood is N(y | 1μ, K_NN + σ²I). Training maximizes it over the
//! kernel hyperparameters with CMA-ES; μ is profiled in closed form,
//! μ̂ = (1ᵀC⁻¹y)/(1ᵀC⁻¹1) with C = K_NN + σ²I, which removes one search
//! dimension. Responses are standardized to zero mean and unit variance
//! internally so the search box is problem-independent.

use ndarray::{Array1, Array2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gram_sym, ArdPExpKernel, Kernel, KnotMapping, WarpedKernel};
use crate::numerics::{cholesky, mvn_logpdf, Rng, SpdFactor};
use crate::optimizers::{cmaes, SearchSpace};

/// Covariance choice for a Kriging model: a stationary p-exponential kernel,
/// or the same kernel on knot-warped inputs.
#[derive(Debug, Clone)]
pub enum GpKernel {
    Plain(ArdPExpKernel),
    Warped(WarpedKernel),
}

impl Kernel for GpKernel {
    fn dim(&self) -> usize {
        match self {
            GpKernel::Plain(k) => k.dim(),
            GpKernel::Warped(k) => k.dim(),
        }
    }

    fn variance(&self) -> f64 {
        match self {
            GpKernel::Plain(k) => k.variance(),
            GpKernel::Warped(k) => k.variance(),
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            GpKernel::Plain(k) => k.eval(x, y),
            GpKernel::Warped(k) => k.eval(x, y),
        }
    }
}

/// Which kernel family `fit` searches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// ARD p-exponential on the raw inputs.
    PExp,
    /// ARD p-exponential on inputs warped by a knot mapping with this many
    /// knots per dimension.
    WarpedPExp { knots: usize },
}

/// CMA-ES budget for the marginal-likelihood search.
#[derive(Debug, Clone, Copy)]
pub struct GpTrainConfig {
    pub budget: usize,
    pub restarts: usize,
}

impl Default for GpTrainConfig {
    fn default() -> Self {
        GpTrainConfig {
            budget: 3000,
            restarts: 2,
        }
    }
}

/// Hyperparameter search box (log-scale where positive):
/// log l in [-6, 6] around unit-standardized responses, log θ in
/// [ln 1e-2, ln 1e3], log σ² in [ln 1e-10, 0] relative to var(y), exponents
/// p in [1, 2] linear, knot densities in [1e-3, 1e3].
fn search_space(d: usize, family: KernelFamily) -> SearchSpace {
    let mut s = SearchSpace::new();
    s.push((-6.0f64).exp(), 6.0f64.exp(), crate::optimizers::Scale::Log); // l
    s.log_block(1e-2, 1e3, d); // θ_i
    s.linear_block(1.0, 2.0, d); // p_i
    s.push(1e-10, 1.0, crate::optimizers::Scale::Log); // σ²
    if let KernelFamily::WarpedPExp { knots } = family {
        s.log_block(1e-3, 1e3, d * knots);
    }
    s
}

fn kernel_from_params(d: usize, family: KernelFamily, params: &[f64]) -> (GpKernel, f64) {
    let variance = params[0];
    let rates = params[1..1 + d].to_vec();
    let exponents = params[1 + d..1 + 2 * d].to_vec();
    let noise = params[1 + 2 * d];
    let base = ArdPExpKernel::new(variance, rates, exponents);
    let kernel = match family {
        KernelFamily::PExp => GpKernel::Plain(base),
        KernelFamily::WarpedPExp { knots } => {
            let mut densities = Vec::with_capacity(d);
            let mut off = 2 + 2 * d;
            for _ in 0..d {
                densities.push(params[off..off + knots].to_vec());
                off += knots;
            }
            GpKernel::Warped(WarpedKernel::new(base, KnotMapping::new(densities)))
        }
    };
    (kernel, noise)
}

/// Profiled trend and the factorization pieces shared by training and
/// prediction. Returns None when the covariance cannot be factorized.
fn assemble(
    kernel: &GpKernel,
    noise: f64,
    x: &Array2<f64>,
    y: &Array1<f64>,
) -> Option<(SpdFactor, f64, Array1<f64>)> {
    let n = x.nrows();
    let mut c = gram_sym(kernel, x);
    for i in 0..n {
        c[(i, i)] += noise;
    }
    let factor = cholesky(&c).ok()?;
    let ones = Array1::ones(n);
    let ci_y = factor.solve(y);
    let ci_one = factor.solve(&ones);
    let denom = ones.dot(&ci_one);
    let trend = if denom.abs() > 0.0 {
        ones.dot(&ci_y) / denom
    } else {
        0.0
    };
    let alpha = &ci_y - &(ci_one * trend);
    Some((factor, trend, alpha))
}

/// Negative log marginal likelihood -log N(y | 1μ, K_NN + σ²I) with the
/// given trend. Factorization failures surface as +∞ so optimizer
/// candidates are rejected rather than aborting the search.
pub fn neg_log_marginal(kernel: &GpKernel, trend: f64, noise: f64, data: &Dataset) -> f64 {
    let n = data.len();
    let mut c = gram_sym(kernel, &data.x);
    for i in 0..n {
        c[(i, i)] += noise;
    }
    match cholesky(&c) {
        Ok(factor) => {
            let mean = Array1::from_elem(n, trend);
            -mvn_logpdf(&data.y, &mean, &factor)
        }
        Err(_) => f64::INFINITY,
    }
}

/// A fitted ordinary-Kriging model. Immutable after construction; the
/// Cholesky factor and the solve against the detrended responses are cached.
#[derive(Debug, Clone)]
pub struct GpModel {
    data: Dataset,
    kernel: GpKernel,
    trend: f64,
    noise: f64,
    y_mean: f64,
    y_scale: f64,
    factor: SpdFactor,
    alpha: Array1<f64>,
    log_marginal: f64,
    degenerate: bool,
}

impl GpModel {
    /// Builds a model directly from raw-scale hyperparameters (no response
    /// standardization). Used for hand-set models and oracle comparisons.
    pub fn with_hyperparameters(
        data: Dataset,
        kernel: GpKernel,
        trend: f64,
        noise: f64,
    ) -> Result<Self> {
        assert_eq!(kernel.dim(), data.dim());
        let (factor, _, _) = assemble(&kernel, noise, &data.x, &data.y)
            .ok_or(Error::TrainingFailed("covariance not factorizable".into()))?;
        let detrended = &data.y - trend;
        let alpha = factor.solve(&detrended);
        let mean = Array1::from_elem(data.len(), trend);
        let log_marginal = mvn_logpdf(&data.y, &mean, &factor);
        Ok(GpModel {
            data,
            kernel,
            trend,
            noise,
            y_mean: 0.0,
            y_scale: 1.0,
            factor,
            alpha,
            log_marginal,
            degenerate: false,
        })
    }

    /// Fits hyperparameters by maximizing the marginal likelihood with
    /// CMA-ES; the trend is profiled analytically for every candidate.
    ///
    /// All-identical responses short-circuit to a flagged constant model
    /// with zero noise.
    pub fn fit(
        data: Dataset,
        family: KernelFamily,
        config: &GpTrainConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n = data.len();
        assert!(n >= 2, "fit requires at least two points");
        let d = data.dim();

        let y0 = data.y[0];
        if data.y.iter().all(|&v| v == y0) {
            // Degenerate: no response variation to standardize or model.
            let kernel = GpKernel::Plain(ArdPExpKernel::new(
                1.0,
                vec![1.0; d],
                vec![2.0; d],
            ));
            let factor = cholesky(&Array2::eye(n)).expect("identity is SPD");
            return Ok(GpModel {
                alpha: Array1::zeros(n),
                log_marginal: f64::NAN,
                data,
                kernel,
                trend: y0,
                noise: 0.0,
                y_mean: 0.0,
                y_scale: 1.0,
                factor,
                degenerate: true,
            });
        }

        let y_mean = data.y.sum() / n as f64;
        let var = data.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = var.sqrt();
        let y_std = data.y.mapv(|v| (v - y_mean) / y_scale);

        let space = search_space(d, family);
        let x = data.x.clone();
        let objective = |params: &[f64]| {
            let (kernel, noise) = kernel_from_params(d, family, params);
            match assemble(&kernel, noise, &x, &y_std) {
                Some((factor, trend, _)) => {
                    let mean = Array1::from_elem(n, trend);
                    -mvn_logpdf(&y_std, &mean, &factor)
                }
                None => f64::INFINITY,
            }
        };
        let (best, nll) = cmaes(objective, &space, config.budget, config.restarts, rng, None, 0.3)?;

        let (kernel, noise) = kernel_from_params(d, family, &best);
        let (factor, trend, alpha) = assemble(&kernel, noise, &x, &y_std)
            .ok_or(Error::TrainingFailed("winning candidate lost definiteness".into()))?;
        Ok(GpModel {
            data,
            kernel,
            trend,
            noise,
            y_mean,
            y_scale,
            factor,
            alpha,
            log_marginal: -nll,
            degenerate: false,
        })
    }

    /// Predictive mean and variance at a unit-box point:
    /// mean = μ + k*ᵀ(K+σ²I)⁻¹(y-1μ), var = k(x*,x*) - k*ᵀ(K+σ²I)⁻¹k* + σ²,
    /// clamped below at zero, both destandardized to the raw response scale.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        if self.degenerate {
            return (self.trend, 0.0);
        }
        let n = self.data.len();
        let mut k_star = Array1::zeros(n);
        for i in 0..n {
            k_star[i] = self
                .kernel
                .eval(self.data.x.row(i).as_slice().unwrap(), x);
        }
        let mean_std = self.trend + k_star.dot(&self.alpha);
        let w = self.factor.solve(&k_star);
        let var_std =
            (self.kernel.eval(x, x) - k_star.dot(&w) + self.noise).max(0.0);
        (
            self.y_mean + self.y_scale * mean_std,
            self.y_scale * self.y_scale * var_std,
        )
    }

    /// Log marginal likelihood of the (internally standardized) responses at
    /// the fitted hyperparameters; the training diagnostic.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn kernel(&self) -> &GpKernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn trend(&self) -> f64 {
        self.trend
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}
