//! Shared numerical kernels: stable Cholesky factorization with escalating
//! jitter, Gaussian density/CDF, multivariate-normal log-density, and the
//! seeded random-number stream every stochastic component draws from.

use ndarray::{Array1, Array2};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// ln(2π), used by the Gaussian log-densities.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Seeded random stream. Identical seeds yield identical draw sequences, so
/// repeated studies replay exactly.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this stream's seed and `stream`.
    /// Pure function of (seed, stream): it does not advance `self`.
    pub fn derive(&self, stream: u64) -> Rng {
        Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(stream)))
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Marsaglia polar method, spare value cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(spare) = self.spare_normal.take() {
            return spare;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let r2 = u * u + v * v;
            if r2 < 1.0 && r2 > 0.0 {
                let fac = (-2.0 * r2.ln() / r2).sqrt();
                self.spare_normal = Some(fac * u);
                return fac * v;
            }
        }
    }

    /// Uniform index in 0..n.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic per-candidate seed from a base seed and a coordinate vector.
/// Used to give Monte-Carlo acquisition evaluations common random numbers
/// that replay exactly regardless of evaluation order.
pub fn point_seed(base: u64, point: &[f64]) -> u64 {
    let mut h = splitmix64(base);
    for &c in point {
        h = splitmix64(h ^ c.to_bits());
    }
    h
}

// ---------------------------------------------------------------------------
// Cholesky factorization with escalating jitter
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor of an SPD matrix, plus the diagonal
/// jitter that was needed to reach positive definiteness.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Array2<f64>,
    jitter: f64,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// log det(A + jitter·I) = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// Forward substitution: solves L w = b.
    pub fn solve_lower(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut w = b.clone();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * w[k];
            }
            w[i] = s / self.lower[(i, i)];
        }
        w
    }

    /// Solves (L Lᵀ) x = b.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves (L Lᵀ) X = B column-wise.
    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(b.dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            let x = self.solve(&col.to_owned());
            out.column_mut(j).assign(&x);
        }
        out
    }

    /// Dense inverse (L Lᵀ)⁻¹; intended for the small matrices used here.
    pub fn inverse(&self) -> Array2<f64> {
        self.solve_mat(&Array2::eye(self.dim()))
    }
}

/// Cholesky factorization with an escalating jitter schedule: a clean
/// factorization is attempted first, then jitter starting at 1e-10 times the
/// mean diagonal and growing tenfold per step up to 1e-4 times the mean
/// diagonal. Kernel matrices at clustered latent points go near-singular
/// routinely, so this is the single entry point for every factorization in
/// the crate.
pub fn cholesky(matrix: &Array2<f64>) -> Result<SpdFactor> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "cholesky requires a square matrix");
    let mean_diag = (0..n).map(|i| matrix[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let cap = 1e-4 * mean_diag;

    let mut jitter = 0.0;
    loop {
        if let Some(lower) = try_factor(matrix, jitter) {
            return Ok(SpdFactor { lower, jitter });
        }
        jitter = if jitter == 0.0 {
            (1e-10 * mean_diag).max(1e-12)
        } else {
            jitter * 10.0
        };
        if jitter > cap || !jitter.is_finite() {
            return Err(Error::NotPositiveDefinite { cap });
        }
    }
}

fn try_factor(matrix: &Array2<f64>, jitter: f64) -> Option<Array2<f64>> {
    let n = matrix.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            // Reads the lower triangle only, treating the input as symmetric.
            let mut s = matrix[(i, j)];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

// ---------------------------------------------------------------------------
// Gaussian density and CDF
// ---------------------------------------------------------------------------

/// Standard normal density φ(z).
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF Φ(z).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Log-density of N(y | mean, L Lᵀ) given the covariance factor.
pub fn mvn_logpdf(y: &Array1<f64>, mean: &Array1<f64>, cov_factor: &SpdFactor) -> f64 {
    let n = cov_factor.dim();
    assert_eq!(y.len(), n, "observation length must match factor dimension");
    assert_eq!(mean.len(), n, "mean length must match factor dimension");
    let resid = y - mean;
    let w = cov_factor.solve_lower(&resid);
    let quad = w.dot(&w);
    -0.5 * (n as f64 * LN_2PI + cov_factor.log_det() + quad)
}
