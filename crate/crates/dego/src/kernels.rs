//! Covariance functions and the knot-parametrized non-linear input mapping.
//!
//! Two stationary ARD families are provided: the p-exponential kernel
//! `l·exp(-Σ θ_i |x_i - x'_i|^{p_i})` used by the Kriging surrogates, and its
//! squared-exponential special case used inside deep GP layers (where the
//! Gaussian convolution integrals must stay closed-form). Non-stationarity is
//! reached either by warping inputs through a [`KnotMapping`] before the
//! stationary kernel, or by composing layers.

use ndarray::Array2;

/// A positive-definite covariance function on d-dimensional points.
pub trait Kernel {
    fn dim(&self) -> usize;

    /// k(x, x), the process variance.
    fn variance(&self) -> f64;

    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
}

/// ARD p-exponential kernel: `k(x,x') = l·exp(-Σ θ_i |x_i-x'_i|^{p_i})`
/// with per-dimension rates θ_i > 0 and exponents p_i in [1, 2].
#[derive(Debug, Clone)]
pub struct ArdPExpKernel {
    pub variance: f64,
    pub rates: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl ArdPExpKernel {
    pub fn new(variance: f64, rates: Vec<f64>, exponents: Vec<f64>) -> Self {
        assert!(variance > 0.0);
        assert_eq!(rates.len(), exponents.len());
        assert!(rates.iter().all(|&t| t > 0.0));
        assert!(exponents.iter().all(|&p| (1.0..=2.0).contains(&p)));
        ArdPExpKernel {
            variance,
            rates,
            exponents,
        }
    }
}

impl Kernel for ArdPExpKernel {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn variance(&self) -> f64 {
        self.variance
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        let mut s = 0.0;
        for i in 0..x.len() {
            let d = (x[i] - y[i]).abs();
            let p = self.exponents[i];
            // powf(d, 2) and d*d differ in the last ulp on some inputs; the
            // exact quadratic keeps the p=2 case identical to ArdSqExpKernel.
            let dp = if p == 2.0 { d * d } else { d.powf(p) };
            s += self.rates[i] * dp;
        }
        self.variance * (-s).exp()
    }
}

/// ARD squared-exponential (Gaussian) kernel:
/// `k(x,x') = l·exp(-Σ θ_i (x_i-x'_i)²)`.
#[derive(Debug, Clone)]
pub struct ArdSqExpKernel {
    pub variance: f64,
    pub rates: Vec<f64>,
}

impl ArdSqExpKernel {
    pub fn new(variance: f64, rates: Vec<f64>) -> Self {
        assert!(variance > 0.0);
        assert!(rates.iter().all(|&t| t > 0.0));
        ArdSqExpKernel { variance, rates }
    }
}

impl Kernel for ArdSqExpKernel {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn variance(&self) -> f64 {
        self.variance
    }

    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut s = 0.0;
        for i in 0..x.len() {
            let d = x[i] - y[i];
            s += self.rates[i] * d * d;
        }
        self.variance * (-s).exp()
    }
}

// ---------------------------------------------------------------------------
// Knot-parametrized non-linear mapping
// ---------------------------------------------------------------------------

/// Per-dimension monotone warping g_i: [0,1] → [0,1] defined as the
/// normalized integral of a piecewise-linear density over equispaced knots.
/// Knot locations are fixed; only the nonnegative density values at the
/// knots are hyperparameters, so a dimension with k_i knots contributes k_i
/// mapping parameters on top of the kernel's θ_i and p_i.
#[derive(Debug, Clone)]
pub struct KnotMapping {
    dims: Vec<DimMapping>,
}

#[derive(Debug, Clone)]
struct DimMapping {
    /// Density values at the equispaced knots; empty means identity.
    densities: Vec<f64>,
    /// Cumulative trapezoid integral at each knot.
    cumulative: Vec<f64>,
    /// Identity short-circuit for uniform densities, so a uniform warp feeds
    /// bit-identical coordinates to the kernel.
    identity: bool,
}

impl DimMapping {
    fn new(densities: Vec<f64>) -> Self {
        assert!(
            densities.iter().all(|&r| r >= 0.0 && r.is_finite()),
            "density values must be nonnegative and finite"
        );
        // A constant density integrates to the identity map; an all-zero (or
        // single-knot) vector is degenerate and treated as uniform.
        let identity = densities.len() < 2
            || densities.iter().all(|&r| r == densities[0]);
        let mut cumulative = vec![0.0; densities.len().max(1)];
        if !identity {
            let h = 1.0 / (densities.len() - 1) as f64;
            for j in 1..densities.len() {
                cumulative[j] =
                    cumulative[j - 1] + 0.5 * h * (densities[j - 1] + densities[j]);
            }
        }
        DimMapping {
            densities,
            cumulative,
            identity,
        }
    }

    fn map(&self, x: f64) -> f64 {
        if self.identity {
            return x;
        }
        let k = self.densities.len();
        let total = self.cumulative[k - 1];
        if x >= 1.0 {
            return 1.0;
        }
        if x <= 0.0 {
            return 0.0;
        }
        let h = 1.0 / (k - 1) as f64;
        let seg = ((x / h).floor() as usize).min(k - 2);
        let t0 = seg as f64 * h;
        let dt = x - t0;
        let r0 = self.densities[seg];
        let r1 = self.densities[seg + 1];
        // Integral of the linear density over [t0, x], closed form.
        let partial = r0 * dt + 0.5 * (r1 - r0) * dt * dt / h;
        (self.cumulative[seg] + partial) / total
    }
}

impl KnotMapping {
    /// Builds a mapping from per-dimension knot density vectors.
    pub fn new(densities: Vec<Vec<f64>>) -> Self {
        KnotMapping {
            dims: densities.into_iter().map(DimMapping::new).collect(),
        }
    }

    /// Identity mapping with `knots` knots in each of `d` dimensions.
    pub fn uniform(d: usize, knots: usize) -> Self {
        KnotMapping::new(vec![vec![1.0; knots]; d])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn knots(&self, dim: usize) -> usize {
        self.dims[dim].densities.len()
    }

    /// g_i(x) for one coordinate.
    pub fn map_scalar(&self, dim: usize, x: f64) -> f64 {
        self.dims[dim].map(x)
    }

    /// Applies the per-dimension warps to a unit-box point.
    pub fn map_point(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        x.iter()
            .enumerate()
            .map(|(i, &v)| self.dims[i].map(v))
            .collect()
    }
}

/// A p-exponential kernel evaluated on warped coordinates:
/// `k(x,x') = l·exp(-Σ θ_i (g_i(x_i) - g_i(x'_i))^{p_i})`.
#[derive(Debug, Clone)]
pub struct WarpedKernel {
    pub base: ArdPExpKernel,
    pub mapping: KnotMapping,
}

impl WarpedKernel {
    pub fn new(base: ArdPExpKernel, mapping: KnotMapping) -> Self {
        assert_eq!(base.dim(), mapping.dim());
        WarpedKernel { base, mapping }
    }
}

impl Kernel for WarpedKernel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn variance(&self) -> f64 {
        self.base.variance
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let gx = self.mapping.map_point(x);
        let gy = self.mapping.map_point(y);
        self.base.eval(&gx, &gy)
    }
}

/// N×M cross-covariance matrix between two point sets.
pub fn gram<K: Kernel>(kernel: &K, x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let m = y.nrows();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..m {
            out[(i, j)] = kernel.eval(xi.as_slice().unwrap(), y.row(j).as_slice().unwrap());
        }
    }
    out
}

/// Symmetric N×N covariance matrix of one point set.
pub fn gram_sym<K: Kernel>(kernel: &K, x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..=i {
            let v = kernel.eval(xi.as_slice().unwrap(), x.row(j).as_slice().unwrap());
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cholesky, Rng};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn kernel_at_zero_distance_is_variance() {
        let k = ArdPExpKernel::new(1.7, vec![2.0, 0.3], vec![1.5, 2.0]);
        assert_eq!(k.eval(&[0.2, 0.8], &[0.2, 0.8]), 1.7);
        let k = ArdSqExpKernel::new(0.4, vec![5.0]);
        assert_eq!(k.eval(&[0.3], &[0.3]), 0.4);
    }

    #[test]
    fn unit_squared_exponential_case() {
        let k = ArdPExpKernel::new(1.0, vec![1.0], vec![2.0]);
        assert_abs_diff_eq!(k.eval(&[0.0], &[1.0]), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn mixed_exponent_case_matches_direct_evaluation() {
        // l=2, θ=(1,3), p=(1,2), x=(0,0), x'=(0.5,0.5):
        // 2·exp(-(1·0.5 + 3·0.25)) = 2·exp(-1.25).
        let k = ArdPExpKernel::new(2.0, vec![1.0, 3.0], vec![1.0, 2.0]);
        let want = 2.0 * (-0.5f64 - 0.75).exp();
        assert_abs_diff_eq!(k.eval(&[0.0, 0.0], &[0.5, 0.5]), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.573, epsilon = 5e-4);
    }

    #[test]
    fn gram_diagonal_and_single_point() {
        let k = ArdSqExpKernel::new(2.5, vec![1.0, 1.0]);
        let x = array![[0.1, 0.2], [0.6, 0.9], [0.3, 0.3]];
        let g = gram_sym(&k, &x);
        for i in 0..3 {
            assert_eq!(g[(i, i)], 2.5);
        }
        let one = array![[0.5, 0.5]];
        let g1 = gram_sym(&k, &one);
        assert_eq!(g1.dim(), (1, 1));
        assert_eq!(g1[(0, 0)], 2.5);
    }

    #[test]
    fn gram_matches_elementwise_oracle() {
        let mut rng = Rng::seed_from_u64(11);
        let k = ArdPExpKernel::new(1.3, vec![0.7, 4.0], vec![1.2, 2.0]);
        let mut x = Array2::zeros((3, 2));
        let mut y = Array2::zeros((4, 2));
        x.mapv_inplace(|_| rng.uniform());
        y.mapv_inplace(|_| rng.uniform());
        let g = gram(&k, &x, &y);
        for i in 0..3 {
            for j in 0..4 {
                let want = k.eval(
                    x.row(i).as_slice().unwrap(),
                    y.row(j).as_slice().unwrap(),
                );
                assert!((g[(i, j)] - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn sqexp_gram_is_positive_definite_with_tiny_jitter() {
        let mut rng = Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k = ArdSqExpKernel::new(
                0.5 + rng.uniform() * 2.0,
                vec![0.5 + rng.uniform() * 10.0, 0.5 + rng.uniform() * 10.0],
            );
            let mut x = Array2::zeros((12, 2));
            x.mapv_inplace(|_| rng.uniform());
            let g = gram_sym(&k, &x);
            let f = cholesky(&g).expect("distinct points give an SPD Gram");
            assert!(f.jitter_used() <= 1e-6 * k.variance());
        }
    }

    #[test]
    fn uniform_mapping_is_identity() {
        let m = KnotMapping::uniform(2, 5);
        assert_eq!(m.map_point(&[0.37, 0.91]), vec![0.37, 0.91]);
        // All-zero densities are degenerate and also treated as uniform.
        let z = KnotMapping::new(vec![vec![0.0, 0.0, 0.0]]);
        assert_eq!(z.map_scalar(0, 0.42), 0.42);
    }

    #[test]
    fn mapping_fixes_endpoints() {
        let m = KnotMapping::new(vec![vec![0.2, 3.0, 0.7, 1.1]]);
        assert_eq!(m.map_scalar(0, 0.0), 0.0);
        assert_eq!(m.map_scalar(0, 1.0), 1.0);
    }

    #[test]
    fn two_knot_case_matches_trapezoid_oracle() {
        // ρ = (1,3) on [0,1]: g(0.5) = ∫₀^0.5(1+2t)dt / ∫₀¹(1+2t)dt = 0.75/2.
        let m = KnotMapping::new(vec![vec![1.0, 3.0]]);
        assert_abs_diff_eq!(m.map_scalar(0, 0.5), 0.375, epsilon = 1e-15);
    }

    /// Trapezoid quadrature of the piecewise-linear density on a fine grid;
    /// independent of the closed-form segment integration.
    fn quadrature_map(densities: &[f64], x: f64) -> f64 {
        let k = densities.len();
        let dens = |t: f64| {
            let h = 1.0 / (k - 1) as f64;
            let seg = ((t / h).floor() as usize).min(k - 2);
            let frac = (t - seg as f64 * h) / h;
            densities[seg] * (1.0 - frac) + densities[seg + 1] * frac
        };
        let steps = 200_000;
        let quad = |upper: f64| {
            let dt = upper / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let a = dens(i as f64 * dt);
                let b = dens((i + 1) as f64 * dt);
                acc += 0.5 * dt * (a + b);
            }
            acc
        };
        quad(x) / quad(1.0)
    }

    #[test]
    fn mapping_matches_quadrature_oracle() {
        let densities = vec![0.4, 2.0, 0.1, 1.5, 0.9];
        let m = KnotMapping::new(vec![densities.clone()]);
        for &x in &[0.05, 0.2, 0.33, 0.5, 0.66, 0.8, 0.97] {
            let want = quadrature_map(&densities, x);
            assert!(
                (m.map_scalar(0, x) - want).abs() < 1e-9,
                "x={x}: {} vs {}",
                m.map_scalar(0, x),
                want
            );
        }
    }

    #[test]
    fn mapping_is_monotone() {
        let mut rng = Rng::seed_from_u64(21);
        for _ in 0..20 {
            let k = 2 + rng.index(6);
            let densities: Vec<f64> = (0..k).map(|_| rng.uniform() * 3.0).collect();
            let m = KnotMapping::new(vec![densities]);
            let mut prev = 0.0;
            for s in 0..=100 {
                let g = m.map_scalar(0, s as f64 / 100.0);
                assert!(g >= prev - 1e-15);
                prev = g;
            }
        }
    }

    #[test]
    fn warped_kernel_composes_mapping_and_kernel() {
        let base = ArdPExpKernel::new(1.4, vec![2.2], vec![1.7]);
        let mapping = KnotMapping::new(vec![vec![2.0, 0.3, 1.0]]);
        let warped = WarpedKernel::new(base.clone(), mapping.clone());
        let (x, y) = (0.23, 0.81);
        let want = base.eval(&[mapping.map_scalar(0, x)], &[mapping.map_scalar(0, y)]);
        assert_eq!(warped.eval(&[x], &[y]), want);
        assert_eq!(warped.eval(&[x], &[x]), 1.4);
    }

    #[test]
    fn warped_kernel_with_uniform_density_equals_plain() {
        let base = ArdPExpKernel::new(2.0, vec![1.5, 0.2], vec![1.3, 2.0]);
        let warped = WarpedKernel::new(base.clone(), KnotMapping::uniform(2, 4));
        let mut rng = Rng::seed_from_u64(33);
        for _ in 0..50 {
            let x = [rng.uniform(), rng.uniform()];
            let y = [rng.uniform(), rng.uniform()];
            // Bitwise identical: the uniform warp must short-circuit.
            assert_eq!(warped.eval(&x, &y).to_bits(), base.eval(&x, &y).to_bits());
        }
    }
}
