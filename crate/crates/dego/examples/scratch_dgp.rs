use dego::dataset::Dataset;
use dego::dgp::{init_dgp, train_dgp, DgpConfig, DgpTrainConfig, InducingMode};
use dego::gp::{GpModel, GpTrainConfig, KernelFamily};
use dego::numerics::Rng;
use ndarray::{Array1, Array2};

fn sample_data(n: usize, seed: u64, noise: f64) -> (Dataset, Box<dyn Fn(f64) -> f64>) {
    let mut rng = Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (rng.normal(), rng.uniform_in(1.0, 9.0), rng.uniform_in(0.0, 6.0)))
        .collect();
    let cl = coeffs.clone();
    let f = move |x: f64| cl.iter().map(|&(a, w, p)| a * (w * x + p).sin()).sum::<f64>();
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64);
    let y = Array1::from_iter(x.column(0).iter().map(|&v| f(v) + noise * rng.normal()));
    (Dataset::new(x, y), Box::new(f))
}

fn main() {
    for seed in [17u64, 23, 31] {
        let (data, truth) = sample_data(14, seed, 0.15);
        let train_idx: Vec<usize> = (0..14).filter(|i| i % 2 == 0).collect();
        let test_idx: Vec<usize> = (0..14).filter(|i| i % 2 == 1).collect();
        let sub = |idx: &[usize]| {
            let x = Array2::from_shape_fn((idx.len(), 1), |(r, c)| data.x[(idx[r], c)]);
            let y = Array1::from_iter(idx.iter().map(|&i| data.y[i]));
            Dataset::new(x, y)
        };
        let train = sub(&train_idx);
        let test = sub(&test_idx);
        let mut rng = Rng::seed_from_u64(seed + 1);
        let gp = GpModel::fit(train.clone(), KernelFamily::PExp,
            &GpTrainConfig { budget: 1500, restarts: 0 }, &mut rng).unwrap();
        let gp_rmse = (test_idx.iter().enumerate()
            .map(|(r, _)| (gp.predict(&test.point(r)).0 - test.y[r]).powi(2))
            .sum::<f64>() / test.len() as f64).sqrt();
        for budget in [4000usize, 12000, 24000] {
            let t0 = std::time::Instant::now();
            let model = init_dgp(&DgpConfig::new(1, 2, InducingMode::Dynamic), &train, &mut rng);
            let e0 = model.elbo();
            let trained = train_dgp(model, &DgpTrainConfig { budget, restarts: 0 }, &mut rng, None).unwrap();
            let rmse = (test_idx.iter().enumerate()
                .map(|(r, _)| (trained.predict_gaussian(&test.point(r)).0 - test.y[r]).powi(2))
                .sum::<f64>() / test.len() as f64).sqrt();
            println!("seed {seed} budget {budget}: elbo {e0:.2} -> {:.2}, dgp_rmse {rmse:.4} vs gp {gp_rmse:.4} ({:.1}s)",
                trained.elbo(), t0.elapsed().as_secs_f64());
        }
        let _ = truth;
    }
}
