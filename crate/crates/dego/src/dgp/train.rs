//! Deep GP training: maximizes [`super::elbo`] over every kernel
//! hyperparameter, layer noise, inducing input, and variational parameter
//! with CMA-ES in a transformed space (log for positives). Warm starts seed
//! the search with a previous model, appending variational entries for new
//! data points by nearest-neighbor copy.

use super::DgpModel;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::optimizers::{cmaes, SearchSpace};

/// CMA-ES budget for the bound maximization.
#[derive(Debug, Clone, Copy)]
pub struct DgpTrainConfig {
    pub budget: usize,
    pub restarts: usize,
}

impl Default for DgpTrainConfig {
    fn default() -> Self {
        DgpTrainConfig {
            budget: 20_000,
            restarts: 2,
        }
    }
}

/// Bounds, standardized response scale: kernel variance e^±6, rates
/// [1e-2, 1e3], layer noise [1e-8, 1], inducing inputs a padded unit box for
/// the first layer and [-6, 6] in hidden space, variational means [-6, 6],
/// variational variances [1e-8, 10].
fn build_space(model: &DgpModel) -> SearchSpace {
    let mut s = SearchSpace::new();
    for (g, layer) in model.layers.iter().enumerate() {
        let d = layer.input_dim();
        s.log_block((-6.0f64).exp(), 6.0f64.exp(), 1);
        s.log_block(1e-2, 1e3, d);
        s.log_block(1e-8, 1.0, 1);
        let (lo, hi) = if g == 0 { (-0.25, 1.25) } else { (-6.0, 6.0) };
        s.linear_block(lo, hi, layer.inducing_count() * d);
    }
    for h in &model.hidden {
        let count = h.mean.len();
        s.linear_block(-6.0, 6.0, count);
        s.log_block(1e-8, 10.0, count);
    }
    s
}

fn pack(model: &DgpModel) -> Vec<f64> {
    let mut v = Vec::new();
    for layer in &model.layers {
        v.push(layer.kernel.variance);
        v.extend_from_slice(&layer.kernel.rates);
        v.push(layer.noise);
        v.extend(layer.inducing.iter());
    }
    for h in &model.hidden {
        v.extend(h.mean.iter());
        v.extend(h.var.iter());
    }
    v
}

fn unpack_into(model: &mut DgpModel, params: &[f64]) {
    let mut off = 0;
    let mut take = |k: usize| {
        let s = &params[off..off + k];
        off += k;
        s
    };
    for layer in &mut model.layers {
        let d = layer.kernel.rates.len();
        layer.kernel.variance = take(1)[0];
        layer.kernel.rates.copy_from_slice(take(d));
        layer.noise = take(1)[0];
        let z = take(layer.inducing.len());
        layer
            .inducing
            .as_slice_mut()
            .expect("row-major")
            .copy_from_slice(z);
    }
    for h in &mut model.hidden {
        let count = h.mean.len();
        h.mean
            .as_slice_mut()
            .expect("row-major")
            .copy_from_slice(take(count));
        h.var
            .as_slice_mut()
            .expect("row-major")
            .copy_from_slice(take(count));
    }
    debug_assert_eq!(off, params.len());
}

/// Copies a previous solution into `model` when the architectures match:
/// kernels, noises and inducing inputs carry over, variational entries for
/// points beyond the previous dataset are nearest-neighbor copies, and
/// inducing slots added by a dynamic schedule take the new points' values.
fn transplant(model: &mut DgpModel, prev: &DgpModel) -> bool {
    let same_shape = prev.layers.len() == model.layers.len()
        && prev.data.dim() == model.data.dim()
        && prev.data.len() <= model.data.len()
        && prev
            .hidden
            .iter()
            .zip(&model.hidden)
            .all(|(a, b)| a.width() == b.width());
    if !same_shape {
        return false;
    }
    let prev_n = prev.data.len();
    let n = model.data.len();

    // Nearest previous point for every new point, in input space.
    let nearest: Vec<usize> = (prev_n..n)
        .map(|i| prev.data.nearest(&model.data.point(i)))
        .collect();

    for (hm, hp) in model.hidden.iter_mut().zip(&prev.hidden) {
        for i in 0..n {
            let src = if i < prev_n { i } else { nearest[i - prev_n] };
            for j in 0..hm.width() {
                hm.mean[(i, j)] = hp.mean[(src, j)];
                hm.var[(i, j)] = hp.var[(src, j)];
            }
        }
    }

    for (g, (lm, lp)) in model.layers.iter_mut().zip(&prev.layers).enumerate() {
        lm.kernel = lp.kernel.clone();
        lm.noise = lp.noise;
        let m_new = lm.inducing_count();
        let m_prev = lp.inducing_count();
        let copy = m_new.min(m_prev);
        for r in 0..copy {
            for c in 0..lm.input_dim() {
                lm.inducing[(r, c)] = lp.inducing[(r, c)];
            }
        }
        for r in copy..m_new {
            // Grown slots take the layer inputs of the newest points.
            let i = (prev_n + (r - copy)).min(n - 1);
            for c in 0..lm.input_dim() {
                lm.inducing[(r, c)] = if g == 0 {
                    model.data.x[(i, c)]
                } else {
                    model.hidden[g - 1].mean[(i, c)]
                };
            }
        }
    }
    true
}

fn reinit_collapsed_dimensions(model: &mut DgpModel, rng: &mut Rng) -> bool {
    let n = model.data.len();
    let mut touched = false;
    for l in 0..model.hidden.len() {
        let source = if l == 0 {
            model.data.x.clone()
        } else {
            model.hidden[l - 1].mean.clone()
        };
        let h = &mut model.hidden[l];
        for j in 0..h.width() {
            let col = h.mean.column(j);
            let (min, max) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if max - min < 1e-6 {
                touched = true;
                let src = source.column(j % source.ncols());
                for i in 0..n {
                    h.mean[(i, j)] = src[i] + 1e-3 * rng.normal();
                    h.var[(i, j)] = 0.1;
                }
            }
        }
    }
    touched
}

/// Trains `model` in place and returns it. The returned bound is never worse
/// than the (possibly warm-started) initialization. A hidden dimension whose
/// variational means collapse to a point is reinitialized once and the
/// search repeated.
pub fn train_dgp(
    mut model: DgpModel,
    config: &DgpTrainConfig,
    rng: &mut Rng,
    warm_start: Option<&DgpModel>,
) -> Result<DgpModel> {
    assert!(model.data.len() >= 3, "train_dgp requires at least 3 points");
    let mut warm = false;
    if let Some(prev) = warm_start {
        if transplant(&mut model, prev) {
            model.refresh();
            warm = true;
        }
    }
    // A warm start refines around the previous optimum; a cold start needs
    // room to explore.
    let sigma0 = if warm { 0.08 } else { 0.25 };

    model = run_search(model, config, sigma0, rng)?;
    if reinit_collapsed_dimensions(&mut model, rng) {
        let before = model.clone();
        model.refresh();
        model = run_search(model, config, sigma0, rng)?;
        if before.elbo() > model.elbo() {
            model = before;
        }
    }
    Ok(model)
}

fn run_search(
    mut model: DgpModel,
    config: &DgpTrainConfig,
    sigma0: f64,
    rng: &mut Rng,
) -> Result<DgpModel> {
    let space = build_space(&model);
    let x0 = pack(&model);
    let init_elbo = model.elbo();

    let mut scratch = model.clone();
    let objective = move |params: &[f64]| {
        unpack_into(&mut scratch, params);
        let b = super::elbo(&scratch);
        if b.is_finite() {
            -b
        } else {
            f64::INFINITY
        }
    };

    match cmaes(objective, &space, config.budget, config.restarts, rng, Some(&x0), sigma0) {
        Ok((best, neg_bound)) => {
            if -neg_bound >= init_elbo || !init_elbo.is_finite() {
                unpack_into(&mut model, &best);
            }
            model.refresh();
            Ok(model)
        }
        Err(Error::AllEvaluationsInvalid) => {
            if init_elbo.is_finite() {
                // Keep the initialization; nothing better was found.
                model.refresh();
                Ok(model)
            } else {
                Err(Error::TrainingFailed(
                    "no finite bound value found within budget".into(),
                ))
            }
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::dgp::{init_dgp, DgpConfig, InducingMode};
    use crate::gp::{GpModel, GpTrainConfig, KernelFamily};
    use ndarray::{Array1, Array2};

    fn sample_gp_data(n: usize, seed: u64) -> Dataset {
        // Draw a function from a stationary GP the cheap way: smooth random
        // Fourier features.
        let mut rng = Rng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (rng.normal(), rng.uniform_in(1.0, 9.0), rng.uniform_in(0.0, 6.0)))
            .collect();
        let f = |x: f64| {
            coeffs
                .iter()
                .map(|&(a, w, p)| a * (w * x + p).sin())
                .sum::<f64>()
        };
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64);
        let y = Array1::from_iter(x.column(0).iter().map(|&v| f(v)));
        Dataset::new(x, y)
    }

    fn small_cfg() -> DgpTrainConfig {
        DgpTrainConfig {
            budget: 2000,
            restarts: 0,
        }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let mut rng = Rng::seed_from_u64(1);
        let data = sample_gp_data(6, 2);
        let model = init_dgp(&DgpConfig::new(2, 2, InducingMode::Dynamic), &data, &mut rng);
        let packed = pack(&model);
        let mut other = model.clone();
        for h in &mut other.hidden {
            h.mean.mapv_inplace(|v| v + 1.0);
        }
        unpack_into(&mut other, &packed);
        assert_eq!(pack(&other), packed);
        assert_eq!(build_space(&model).dim(), packed.len());
    }

    #[test]
    fn training_improves_the_bound() {
        let mut rng = Rng::seed_from_u64(3);
        let data = sample_gp_data(8, 5);
        let model = init_dgp(&DgpConfig::new(1, 1, InducingMode::Dynamic), &data, &mut rng);
        let before = model.elbo();
        let trained = train_dgp(model, &small_cfg(), &mut rng, None).unwrap();
        assert!(trained.elbo() >= before, "{} < {}", trained.elbo(), before);
    }

    #[test]
    fn warm_start_on_unchanged_data_never_regresses() {
        let mut rng = Rng::seed_from_u64(4);
        let data = sample_gp_data(7, 9);
        let cfg = DgpConfig::new(1, 2, InducingMode::Dynamic);
        let first = train_dgp(init_dgp(&cfg, &data, &mut rng), &small_cfg(), &mut rng, None)
            .unwrap();
        let before = first.elbo();
        let again = train_dgp(
            init_dgp(&cfg, &data, &mut rng),
            &DgpTrainConfig {
                budget: 400,
                restarts: 0,
            },
            &mut rng,
            Some(&first),
        )
        .unwrap();
        assert!(again.elbo() >= before - 1e-9, "{} < {}", again.elbo(), before);
    }

    #[test]
    fn warm_start_extends_to_new_points() {
        let mut rng = Rng::seed_from_u64(5);
        let mut data = sample_gp_data(6, 11);
        let cfg = DgpConfig::new(1, 2, InducingMode::Dynamic);
        let prev =
            train_dgp(init_dgp(&cfg, &data, &mut rng), &small_cfg(), &mut rng, None).unwrap();

        data.push(&[0.42], 0.3);
        let mut grown = init_dgp(&cfg, &data, &mut rng);
        assert!(transplant(&mut grown, &prev));
        assert_eq!(grown.hidden[0].mean.nrows(), 7);
        assert_eq!(grown.layers[0].inducing_count(), 7);
        // The new point's variational entries are copies of its nearest
        // previous neighbor.
        let nearest = prev.data().nearest(&[0.42]);
        for j in 0..2 {
            assert_eq!(grown.hidden[0].mean[(6, j)], prev.hidden[0].mean[(nearest, j)]);
            assert_eq!(grown.hidden[0].var[(6, j)], prev.hidden[0].var[(nearest, j)]);
        }
        grown.refresh();
        assert!(grown.elbo().is_finite());
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let data = sample_gp_data(6, 13);
        let cfg = DgpConfig::new(1, 1, InducingMode::Dynamic);
        let run = |seed| {
            let mut rng = Rng::seed_from_u64(seed);
            let m = train_dgp(init_dgp(&cfg, &data, &mut rng), &small_cfg(), &mut rng, None)
                .unwrap();
            (m.elbo(), pack(&m))
        };
        let (ea, pa) = run(21);
        let (eb, pb) = run(21);
        assert_eq!(ea, eb);
        assert_eq!(pa, pb);
    }

    #[test]
    fn one_hidden_layer_keeps_pace_with_plain_gp_on_stationary_data() {
        // Head-to-head on samples of a smooth stationary function: the DGP's
        // held-out RMSE must stay within 2× of the plain GP's.
        let mut rng = Rng::seed_from_u64(6);
        let data = sample_gp_data(14, 17);
        let train_idx: Vec<usize> = (0..14).filter(|i| i % 2 == 0).collect();
        let test_idx: Vec<usize> = (0..14).filter(|i| i % 2 == 1).collect();
        let sub = |idx: &[usize]| {
            let x = Array2::from_shape_fn((idx.len(), 1), |(r, c)| data.x[(idx[r], c)]);
            let y = Array1::from_iter(idx.iter().map(|&i| data.y[i]));
            Dataset::new(x, y)
        };
        let train = sub(&train_idx);
        let test = sub(&test_idx);

        let gp = GpModel::fit(
            train.clone(),
            KernelFamily::PExp,
            &GpTrainConfig {
                budget: 1200,
                restarts: 0,
            },
            &mut rng,
        )
        .unwrap();
        let dgp = train_dgp(
            init_dgp(&DgpConfig::new(1, 2, InducingMode::Dynamic), &train, &mut rng),
            &DgpTrainConfig {
                budget: 6000,
                restarts: 0,
            },
            &mut rng,
            None,
        )
        .unwrap();

        let rmse = |f: &dyn Fn(&[f64]) -> f64| {
            let se: f64 = test_idx
                .iter()
                .enumerate()
                .map(|(r, _)| (f(&test.point(r)) - test.y[r]).powi(2))
                .sum();
            (se / test.len() as f64).sqrt()
        };
        let gp_rmse = rmse(&|p| gp.predict(p).0);
        let dgp_rmse = rmse(&|p| dgp.predict_gaussian(p).0);
        assert!(
            dgp_rmse <= 2.0 * gp_rmse + 1e-9,
            "dgp {dgp_rmse} vs gp {gp_rmse}"
        );
    }
}
