//! Design points and observed responses.

use ndarray::{Array1, Array2};

/// Design points X (N×d, unit-box coordinates) and responses y (N).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Self {
        assert_eq!(x.nrows(), y.len(), "one response per design point");
        Dataset { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.x.row(i).to_vec()
    }

    /// Appends one (point, response) pair.
    pub fn push(&mut self, point: &[f64], response: f64) {
        assert_eq!(point.len(), self.dim());
        let mut x = Array2::zeros((self.len() + 1, self.dim()));
        x.slice_mut(ndarray::s![..self.len(), ..]).assign(&self.x);
        for (j, &v) in point.iter().enumerate() {
            x[(self.len(), j)] = v;
        }
        let mut y = Array1::zeros(self.len() + 1);
        y.slice_mut(ndarray::s![..self.len()]).assign(&self.y);
        y[self.len()] = response;
        self.x = x;
        self.y = y;
    }

    /// Smallest L∞ distance from `point` to any design point, or +∞ when the
    /// dataset is empty.
    pub fn min_distance_linf(&self, point: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for row in self.x.rows() {
            let d = row
                .iter()
                .zip(point)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            best = best.min(d);
        }
        best
    }

    /// Index of the design point closest (Euclidean) to `point`.
    pub fn nearest(&self, point: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let d: f64 = row.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}
