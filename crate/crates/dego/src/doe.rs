//! Stochastic Latin Hypercube Sampling for initial designs.
//!
//! Problems define an affine map from the unit box to their native bounds;
//! designs always live in the unit box so kernel lengthscale bounds stay
//! problem-independent.

use ndarray::Array2;

use crate::numerics::Rng;

/// An N×d design with one point per stratum in every dimension.
#[derive(Debug, Clone)]
pub struct Design {
    points: Array2<f64>,
}

impl Design {
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }
}

/// Stochastic Latin Hypercube sample of `n` points in `d` dimensions: for
/// each dimension an independent random permutation assigns the points to
/// the `n` equal-width strata, and each point sits at a uniform random
/// offset within its stratum.
pub fn lhs(n: usize, d: usize, rng: &mut Rng) -> Design {
    assert!(n >= 1 && d >= 1, "lhs requires n >= 1 and d >= 1");
    let mut points = Array2::zeros((n, d));
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        rng.shuffle(&mut strata);
        for i in 0..n {
            points[(i, j)] = (strata[i] as f64 + rng.uniform()) / n as f64;
        }
    }
    Design { points }
}
