//! Gradient-free optimizers: CMA-ES for surrogate training and differential
//! evolution for acquisition maximization.
//!
//! Both optimizers work internally on the unit cube; [`SearchSpace`] maps
//! candidates back to natural coordinates, exponentiating log-scaled
//! parameters. CMA-ES handles box bounds by reflection, DE by clipping.

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Scale tag for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

/// Box-bounded search space with per-parameter linear or log scaling.
#[derive(Debug, Clone, Default)]
pub struct SearchSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<Scale>,
}

impl SearchSpace {
    pub fn new() -> Self {
        SearchSpace::default()
    }

    pub fn push(&mut self, lower: f64, upper: f64, scale: Scale) {
        assert!(lower < upper, "lower bound must be below upper bound");
        if scale == Scale::Log {
            assert!(lower > 0.0, "log-scaled bounds must be strictly positive");
        }
        self.lower.push(lower);
        self.upper.push(upper);
        self.scale.push(scale);
    }

    pub fn linear(mut self, lower: f64, upper: f64) -> Self {
        self.push(lower, upper, Scale::Linear);
        self
    }

    pub fn log(mut self, lower: f64, upper: f64) -> Self {
        self.push(lower, upper, Scale::Log);
        self
    }

    /// Adds `count` identical linear parameters.
    pub fn linear_block(&mut self, lower: f64, upper: f64, count: usize) {
        for _ in 0..count {
            self.push(lower, upper, Scale::Linear);
        }
    }

    /// Adds `count` identical log parameters.
    pub fn log_block(&mut self, lower: f64, upper: f64, count: usize) {
        for _ in 0..count {
            self.push(lower, upper, Scale::Log);
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    /// Natural coordinates → unit cube.
    pub fn to_unit(&self, natural: &[f64]) -> Vec<f64> {
        assert_eq!(natural.len(), self.dim());
        (0..self.dim())
            .map(|i| {
                let u = match self.scale[i] {
                    Scale::Linear => {
                        (natural[i] - self.lower[i]) / (self.upper[i] - self.lower[i])
                    }
                    Scale::Log => {
                        (natural[i].ln() - self.lower[i].ln())
                            / (self.upper[i].ln() - self.lower[i].ln())
                    }
                };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Unit cube → natural coordinates.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        assert_eq!(unit.len(), self.dim());
        (0..self.dim())
            .map(|i| match self.scale[i] {
                Scale::Linear => self.lower[i] + unit[i] * (self.upper[i] - self.lower[i]),
                Scale::Log => {
                    let ll = self.lower[i].ln();
                    (ll + unit[i] * (self.upper[i].ln() - ll)).exp()
                }
            })
            .collect()
    }

    pub fn contains(&self, natural: &[f64]) -> bool {
        natural
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((&v, &lo), &hi)| v >= lo && v <= hi)
    }

    fn sample_unit(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.uniform()).collect()
    }
}

/// Reflects a unit-cube coordinate back into [0,1] (triangle-wave fold).
fn reflect(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        return v;
    }
    let r = v.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

/// Best-so-far bookkeeping shared by both optimizers.
struct Incumbent {
    point: Vec<f64>,
    value: f64,
}

impl Incumbent {
    fn new() -> Self {
        Incumbent {
            point: Vec::new(),
            value: f64::INFINITY,
        }
    }

    /// `value` is in minimization orientation.
    fn offer(&mut self, point: &[f64], value: f64) {
        if value < self.value {
            self.value = value;
            self.point = point.to_vec();
        }
    }
}

// ---------------------------------------------------------------------------
// CMA-ES
// ---------------------------------------------------------------------------

/// Default population size, 4 + ⌊3 ln n⌋.
pub fn cmaes_default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor().max(0.0) as usize
}

/// Beyond this dimension the covariance matrix is kept diagonal
/// (separable CMA-ES); the full matrix update is cubic in n and the deep-GP
/// parameter vectors run into the thousands.
const SEP_CMA_THRESHOLD: usize = 200;

/// Minimizes `objective` over `space` with CMA-ES.
///
/// The total evaluation `budget` is split evenly across `restarts + 1` runs;
/// the first run starts from `init` (or the box center) with initial step
/// size `sigma0` (unit-cube scale; 0.3 is a good default, smaller refines a
/// warm start), and restarts reseed the mean from fresh uniform draws. The
/// best candidate ever evaluated is returned. Non-finite objective values
/// reject the candidate.
pub fn cmaes<F>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    restarts: usize,
    rng: &mut Rng,
    init: Option<&[f64]>,
    sigma0: f64,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = space.dim();
    assert!(n > 0, "empty search space");
    let runs = restarts + 1;
    let run_budget = (budget / runs).max(cmaes_default_population(n));
    let mut best = Incumbent::new();

    if let Some(x0) = init {
        let v = objective(x0);
        if v.is_finite() {
            best.offer(x0, v);
        }
    }

    for run in 0..runs {
        let mean0 = if run == 0 {
            match init {
                Some(x0) => space.to_unit(x0),
                None => vec![0.5; n],
            }
        } else {
            space.sample_unit(rng)
        };
        let run_sigma = if run == 0 { sigma0 } else { 0.3 };
        cmaes_run(&mut objective, space, run_budget, mean0, run_sigma, rng, &mut best);
    }

    if best.point.is_empty() {
        return Err(Error::AllEvaluationsInvalid);
    }
    Ok((best.point, best.value))
}

fn cmaes_run<F>(
    objective: &mut F,
    space: &SearchSpace,
    budget: usize,
    mean0: Vec<f64>,
    sigma0: f64,
    rng: &mut Rng,
    best: &mut Incumbent,
) where
    F: FnMut(&[f64]) -> f64,
{
    let n = space.dim();
    let separable = n > SEP_CMA_THRESHOLD;
    let lambda = cmaes_default_population(n);
    let mu = lambda / 2;
    let mut weights: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let nf = n as f64;
    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let mut c_1 = 2.0 / ((nf + 1.3) * (nf + 1.3) + mu_eff);
    let mut c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0) * (nf + 2.0) + mu_eff))
        .min(1.0 - c_1);
    if separable {
        // Separable variant: diagonal covariance admits faster learning.
        let boost = (nf + 2.0) / 3.0;
        c_1 = (c_1 * boost).min(0.2);
        c_mu = (c_mu * boost).min(1.0 - c_1);
    }
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut mean = mean0;
    let mut sigma = sigma0;
    let mut p_sigma = vec![0.0; n];
    let mut p_c = vec![0.0; n];

    // Full mode keeps C with its eigendecomposition (B, D); separable mode
    // keeps only the diagonal.
    let mut cov = if separable {
        None
    } else {
        Some(CovState::identity(n))
    };
    let mut diag: Vec<f64> = vec![1.0; n];

    let mut evals = 0usize;
    let mut gen = 0usize;
    let mut zs: Vec<Vec<f64>> = vec![vec![0.0; n]; lambda];
    let mut xs: Vec<Vec<f64>> = vec![vec![0.0; n]; lambda];

    while evals + lambda <= budget {
        gen += 1;
        // Sample, reflect into the box, evaluate.
        let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(lambda);
        for i in 0..lambda {
            for z in zs[i].iter_mut() {
                *z = rng.normal();
            }
            let step = match &cov {
                Some(c) => c.transform(&zs[i]),
                None => zs[i]
                    .iter()
                    .zip(&diag)
                    .map(|(&z, &d)| z * d.sqrt())
                    .collect(),
            };
            for j in 0..n {
                xs[i][j] = reflect(mean[j] + sigma * step[j]);
            }
            let natural = space.from_unit(&xs[i]);
            let mut v = objective(&natural);
            if !v.is_finite() {
                v = f64::INFINITY;
            } else {
                best.offer(&natural, v);
            }
            ranked.push((i, v));
        }
        evals += lambda;
        ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

        let old_mean = mean.clone();
        for j in 0..n {
            mean[j] = weights
                .iter()
                .zip(&ranked)
                .map(|(w, (idx, _))| w * xs[*idx][j])
                .sum();
        }

        // Mean displacement in step space.
        let delta: Vec<f64> = (0..n).map(|j| (mean[j] - old_mean[j]) / sigma).collect();
        let inv_sqrt_delta: Vec<f64> = match &cov {
            Some(c) => c.inv_sqrt_transform(&delta),
            None => delta
                .iter()
                .zip(&diag)
                .map(|(&d, &c)| d / c.sqrt())
                .collect(),
        };
        let cs_fac = (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        for j in 0..n {
            p_sigma[j] = (1.0 - c_sigma) * p_sigma[j] + cs_fac * inv_sqrt_delta[j];
        }
        let ps_norm = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h_denominator = (1.0 - (1.0 - c_sigma).powi(2 * gen as i32)).sqrt();
        let h_sigma = ps_norm / h_denominator < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let cc_fac = (c_c * (2.0 - c_c) * mu_eff).sqrt();
        for j in 0..n {
            p_c[j] = (1.0 - c_c) * p_c[j] + if h_sigma { cc_fac * delta[j] } else { 0.0 };
        }
        let c1a = c_1 * if h_sigma { 0.0 } else { c_c * (2.0 - c_c) };

        match cov.as_mut() {
            Some(c) => {
                c.update(
                    c_1,
                    c_mu,
                    c1a,
                    &p_c,
                    &weights,
                    &ranked,
                    &xs,
                    &old_mean,
                    sigma,
                );
                if gen % c.eigen_interval == 0 {
                    c.refresh_eigen();
                }
            }
            None => {
                for j in 0..n {
                    let mut rank_mu = 0.0;
                    for (w, (idx, _)) in weights.iter().zip(&ranked) {
                        let y = (xs[*idx][j] - old_mean[j]) / sigma;
                        rank_mu += w * y * y;
                    }
                    diag[j] = (1.0 - c_1 - c_mu + c1a) * diag[j]
                        + c_1 * p_c[j] * p_c[j]
                        + c_mu * rank_mu;
                    diag[j] = diag[j].clamp(1e-20, 1e6);
                }
            }
        }

        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-12, 1.0);
    }
}

/// Full covariance with lazily refreshed eigendecomposition.
struct CovState {
    c: Vec<Vec<f64>>,
    eigvec: Vec<Vec<f64>>,
    eigval_sqrt: Vec<f64>,
    eigen_interval: usize,
}

impl CovState {
    fn identity(n: usize) -> Self {
        let mut eye = vec![vec![0.0; n]; n];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        CovState {
            c: eye.clone(),
            eigvec: eye,
            eigval_sqrt: vec![1.0; n],
            eigen_interval: (n / 10).max(1),
        }
    }

    /// B·diag(√λ)·z
    fn transform(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let mut scaled = vec![0.0; n];
        for j in 0..n {
            scaled[j] = self.eigval_sqrt[j] * z[j];
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.eigvec[i][j] * scaled[j];
            }
            out[i] = s;
        }
        out
    }

    /// C^{-1/2}·v = B·diag(1/√λ)·Bᵀ·v
    fn inv_sqrt_transform(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut proj = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self.eigvec[i][j] * v[i];
            }
            proj[j] = s / self.eigval_sqrt[j];
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.eigvec[i][j] * proj[j];
            }
            out[i] = s;
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        c_1: f64,
        c_mu: f64,
        c1a: f64,
        p_c: &[f64],
        weights: &[f64],
        ranked: &[(usize, f64)],
        xs: &[Vec<f64>],
        old_mean: &[f64],
        sigma: f64,
    ) {
        let n = p_c.len();
        let keep = 1.0 - c_1 - c_mu + c1a;
        for i in 0..n {
            for j in 0..=i {
                let mut v = keep * self.c[i][j] + c_1 * p_c[i] * p_c[j];
                for (w, (idx, _)) in weights.iter().zip(ranked) {
                    let yi = (xs[*idx][i] - old_mean[i]) / sigma;
                    let yj = (xs[*idx][j] - old_mean[j]) / sigma;
                    v += c_mu * w * yi * yj;
                }
                self.c[i][j] = v;
                self.c[j][i] = v;
            }
        }
    }

    fn refresh_eigen(&mut self) {
        let n = self.c.len();
        let (vals, vecs) = jacobi_eigen(&self.c);
        self.eigvec = vecs;
        for j in 0..n {
            self.eigval_sqrt[j] = vals[j].max(1e-20).sqrt();
        }
    }
}

/// Cyclic Jacobi eigendecomposition for symmetric matrices. Returns
/// (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..50 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    (vals, v)
}

// ---------------------------------------------------------------------------
// Differential evolution
// ---------------------------------------------------------------------------

/// Maximizes `objective` over `space` with rand/1/bin differential
/// evolution, F = 0.8, CR = 0.9, clip-to-bounds. The best candidate ever
/// evaluated is returned.
pub fn differential_evolution<F>(
    mut objective: F,
    space: &SearchSpace,
    pop: usize,
    generations: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(pop >= 4, "differential evolution needs a population of 4+");
    let n = space.dim();
    const F_WEIGHT: f64 = 0.8;
    const CR: f64 = 0.9;

    let mut best = Incumbent::new();
    let mut members: Vec<Vec<f64>> = (0..pop).map(|_| space.sample_unit(rng)).collect();
    let mut fitness: Vec<f64> = members
        .iter()
        .map(|u| {
            let natural = space.from_unit(u);
            let v = objective(&natural);
            if v.is_finite() {
                best.offer(&natural, -v);
            }
            v
        })
        .collect();

    let mut trial = vec![0.0; n];
    for _ in 0..generations {
        for i in 0..pop {
            let mut pick = || loop {
                let r = rng.index(pop);
                if r != i {
                    return r;
                }
            };
            let (r1, r2, r3) = {
                let a = pick();
                let b = loop {
                    let b = pick();
                    if b != a {
                        break b;
                    }
                };
                let c = loop {
                    let c = pick();
                    if c != a && c != b {
                        break c;
                    }
                };
                (a, b, c)
            };
            let j_rand = rng.index(n);
            for j in 0..n {
                trial[j] = if rng.uniform() < CR || j == j_rand {
                    (members[r1][j] + F_WEIGHT * (members[r2][j] - members[r3][j]))
                        .clamp(0.0, 1.0)
                } else {
                    members[i][j]
                };
            }
            let natural = space.from_unit(&trial);
            let v = objective(&natural);
            if v.is_finite() {
                best.offer(&natural, -v);
            }
            let accept = match (v.is_finite(), fitness[i].is_finite()) {
                (true, true) => v >= fitness[i],
                (true, false) => true,
                _ => false,
            };
            if accept {
                members[i].copy_from_slice(&trial);
                fitness[i] = v;
            }
        }
    }

    if best.point.is_empty() {
        return Err(Error::AllEvaluationsInvalid);
    }
    Ok((best.point, -best.value))
}
