//! Deep GP prediction: Gaussian moment propagation and root-to-leaf
//! Monte-Carlo sampling.
//!
//! Both paths work from per-layer caches built once after training: the
//! inducing Gram factor, A = K_ZZ + Ψ2/σ², the per-output-column weights
//! α_j = A⁻¹Ψ1ᵀ t̄_j / σ², and the variance correction K_ZZ⁻¹ − A⁻¹.
//! At a test distribution with moments (μ*, ν*) one layer emits, per output
//! column,
//!
//!   mean = ψ1* α,
//!   var  = l − tr((K_ZZ⁻¹ − A⁻¹)Ψ2*) + αᵀΨ2*α − mean²  + σ²,
//!
//! where ψ1*/Ψ2* are psi statistics of the single test point. A
//! deterministic input (ν* = 0) reduces this to the familiar sparse-GP
//! predictive, which is also the per-sample rule of the Monte-Carlo path.

use ndarray::Array2;

use super::psi::psi_statistics;
use super::DgpModel;
use crate::kernels::{gram_sym, Kernel};
use crate::numerics::{cholesky, Rng};

/// Per-layer quantities prediction needs; derived from the trained
/// parameters and the training-time psi statistics.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// α, M×out_dim.
    alpha: Array2<f64>,
    /// K_ZZ⁻¹ − A⁻¹, M×M.
    var_correction: Array2<f64>,
}

pub(crate) fn build_caches(model: &DgpModel) -> Vec<LayerCache> {
    let n_layers = model.layers.len();
    let mut caches = Vec::with_capacity(n_layers);
    for (g, layer) in model.layers.iter().enumerate() {
        let zeros;
        let (q_mean, q_var): (&Array2<f64>, &Array2<f64>) = if g == 0 {
            zeros = Array2::zeros(model.data.x.dim());
            (&model.data.x, &zeros)
        } else {
            (&model.hidden[g - 1].mean, &model.hidden[g - 1].var)
        };
        let psi = psi_statistics(&layer.kernel, &layer.inducing, q_mean, q_var);
        let targets: &Array2<f64> = if g == n_layers - 1 {
            &model.y_std
        } else {
            &model.hidden[g].mean
        };

        let kzz = gram_sym(&layer.kernel, &layer.inducing);
        let (alpha, var_correction) = match (cholesky(&kzz), cholesky(&a_matrix(&kzz, &psi.psi2, layer.noise))) {
            (Ok(lk), Ok(la)) => {
                let u = psi.psi1.t().dot(targets);
                let alpha = la.solve_mat(&u) / layer.noise;
                let var_correction = &lk.inverse() - &la.inverse();
                (alpha, var_correction)
            }
            // Untrainable parameters: predict from the prior (α = 0, no
            // variance reduction). The bound already rejected them.
            _ => (
                Array2::zeros((layer.inducing.nrows(), targets.ncols())),
                Array2::zeros((layer.inducing.nrows(), layer.inducing.nrows())),
            ),
        };
        caches.push(LayerCache {
            alpha,
            var_correction,
        });
    }
    caches
}

fn a_matrix(kzz: &Array2<f64>, psi2: &Array2<f64>, noise: f64) -> Array2<f64> {
    let m = kzz.nrows();
    let mut a = kzz + &(psi2 / noise);
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

impl DgpModel {
    /// Moment propagation under the Gaussian assumption: the deterministic
    /// test point becomes a Gaussian after the first layer, and every later
    /// layer consumes moments and emits moments; each layer adds its noise.
    /// Returns (mean, variance) on the raw response scale.
    pub fn predict_gaussian(&self, x: &[f64]) -> (f64, f64) {
        assert_eq!(x.len(), self.data.dim());
        let mut mean: Vec<f64> = x.to_vec();
        let mut var: Vec<f64> = vec![0.0; x.len()];
        for (g, layer) in self.layers.iter().enumerate() {
            let cache = &self.caches[g];
            let m_in = Array2::from_shape_vec((1, mean.len()), mean.clone()).unwrap();
            let v_in = Array2::from_shape_vec((1, var.len()), var.clone()).unwrap();
            let psi = psi_statistics(&layer.kernel, &layer.inducing, &m_in, &v_in);
            let psi1 = psi.psi1.row(0).to_owned();
            let l = layer.kernel.variance();

            // tr((K⁻¹ − A⁻¹)Ψ2*) shared across output columns.
            let mut tr = 0.0;
            let mm = layer.inducing.nrows();
            for i in 0..mm {
                for j in 0..mm {
                    tr += cache.var_correction[(i, j)] * psi.psi2[(j, i)];
                }
            }

            let out_dim = cache.alpha.ncols();
            let mut out_mean = vec![0.0; out_dim];
            let mut out_var = vec![0.0; out_dim];
            for j in 0..out_dim {
                let alpha_j = cache.alpha.column(j);
                let mu = psi1.dot(&alpha_j);
                let quad = alpha_j.dot(&psi.psi2.dot(&alpha_j));
                let v = (l - tr + quad - mu * mu).max(0.0) + layer.noise;
                out_mean[j] = mu;
                out_var[j] = v;
            }
            mean = out_mean;
            var = out_var;
        }
        (
            self.y_mean + self.y_scale * mean[0],
            (self.y_scale * self.y_scale * var[0]).max(0.0),
        )
    }

    /// Monte-Carlo prediction: k independent root-to-leaf passes, each layer
    /// drawing from its sparse predictive at the incoming sample. Returns
    /// the sample mean, the unbiased sample variance, and the samples, all
    /// on the raw response scale.
    pub fn predict_mc(&self, x: &[f64], k: usize, rng: &mut Rng) -> (f64, f64, Vec<f64>) {
        assert!(k >= 2, "Monte-Carlo prediction needs k >= 2 samples");
        assert_eq!(x.len(), self.data.dim());
        let mut samples = Vec::with_capacity(k);
        let mut kv: Vec<f64> = Vec::new();
        for _ in 0..k {
            let mut value: Vec<f64> = x.to_vec();
            for (g, layer) in self.layers.iter().enumerate() {
                let cache = &self.caches[g];
                let m = layer.inducing.nrows();
                kv.clear();
                kv.resize(m, 0.0);
                for (i, row) in layer.inducing.rows().into_iter().enumerate() {
                    kv[i] = layer.kernel.eval(&value, row.as_slice().unwrap());
                }
                // Shared latent variance: l − kᵀ(K⁻¹ − A⁻¹)k.
                let mut quad = 0.0;
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += cache.var_correction[(i, j)] * kv[j];
                    }
                    quad += kv[i] * acc;
                }
                let latent_var = (layer.kernel.variance() - quad).max(0.0);
                let std = (latent_var + layer.noise).sqrt();

                let out_dim = cache.alpha.ncols();
                let mut next = vec![0.0; out_dim];
                for (j, val) in next.iter_mut().enumerate() {
                    let mut mu = 0.0;
                    for i in 0..m {
                        mu += kv[i] * cache.alpha[(i, j)];
                    }
                    *val = mu + std * rng.normal();
                }
                value = next;
            }
            samples.push(self.y_mean + self.y_scale * value[0]);
        }
        let mean = samples.iter().sum::<f64>() / k as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (mean, var, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::dgp::{init_dgp, DgpConfig, InducingMode};
    use ndarray::{array, Array1};

    fn toy_model() -> DgpModel {
        let x = Array2::from_shape_fn((9, 1), |(i, _)| i as f64 / 8.0);
        let y = x.column(0).mapv(|v| (4.0 * v).cos());
        let mut rng = Rng::seed_from_u64(10);
        init_dgp(
            &DgpConfig::new(1, 1, InducingMode::Dynamic),
            &Dataset::new(x, y),
            &mut rng,
        )
    }

    #[test]
    fn first_layer_mean_matches_sparse_predictive_at_zero_variance() {
        // With a deterministic input the layer-0 psi row is the plain kernel
        // vector, so the propagated mean must equal k(x,Z)·α exactly.
        let model = toy_model();
        let layer = &model.layers[0];
        let cache = &model.caches[0];
        let x = [0.41];
        let mut kv = Array1::zeros(layer.inducing.nrows());
        for (i, row) in layer.inducing.rows().into_iter().enumerate() {
            kv[i] = layer.kernel.eval(&x, row.as_slice().unwrap());
        }
        let want = kv.dot(&cache.alpha.column(0));

        let m_in = Array2::from_shape_vec((1, 1), vec![x[0]]).unwrap();
        let v_in = Array2::zeros((1, 1));
        let psi = psi_statistics(&layer.kernel, &layer.inducing, &m_in, &v_in);
        let got = psi.psi1.row(0).dot(&cache.alpha.column(0));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn gaussian_prediction_variance_is_nonnegative() {
        let model = toy_model();
        let mut rng = Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let (_, v) = model.predict_gaussian(&[rng.uniform()]);
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn mc_prediction_is_deterministic_given_seed() {
        let model = toy_model();
        let a = model.predict_mc(&[0.3], 64, &mut Rng::seed_from_u64(5));
        let b = model.predict_mc(&[0.3], 64, &mut Rng::seed_from_u64(5));
        assert_eq!(a.2, b.2);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn two_sample_variance_is_unbiased_formula() {
        let model = toy_model();
        let (mean, var, s) = model.predict_mc(&[0.6], 2, &mut Rng::seed_from_u64(8));
        assert_eq!(s.len(), 2);
        let want_mean = (s[0] + s[1]) / 2.0;
        let want_var = (s[0] - want_mean).powi(2) + (s[1] - want_mean).powi(2);
        assert!((mean - want_mean).abs() < 1e-15);
        assert!((var - want_var).abs() < 1e-12);
    }

    #[test]
    fn mc_mean_agrees_with_gaussian_propagation_within_error() {
        let model = toy_model();
        let mut rng = Rng::seed_from_u64(300);
        for &x in &[0.15, 0.5, 0.85] {
            let (gm, _) = model.predict_gaussian(&[x]);
            let k = 10_000;
            let (mm, mv, _) = model.predict_mc(&[x], k, &mut rng);
            let se = (mv / k as f64).sqrt();
            assert!(
                (gm - mm).abs() <= 3.0 * se.max(1e-6),
                "x={x}: gaussian {gm} vs mc {mm} ± {se}"
            );
        }
    }

    #[test]
    fn prediction_handles_multidimensional_hidden_layers() {
        let x = array![[0.0, 0.1], [0.3, 0.8], [0.7, 0.2], [1.0, 0.9], [0.5, 0.5]];
        let y = array![0.2, -0.4, 0.9, 0.1, 0.0];
        let mut rng = Rng::seed_from_u64(12);
        let model = init_dgp(
            &DgpConfig::new(2, 3, InducingMode::Dynamic),
            &Dataset::new(x, y),
            &mut rng,
        );
        let (m, v) = model.predict_gaussian(&[0.4, 0.6]);
        assert!(m.is_finite());
        assert!(v >= 0.0);
        let (mm, mv, samples) = model.predict_mc(&[0.4, 0.6], 16, &mut rng);
        assert!(mm.is_finite() && mv >= 0.0);
        assert_eq!(samples.len(), 16);
    }
}
