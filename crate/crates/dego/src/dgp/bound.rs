//! The collapsed variational bound of one sparse GP layer.
//!
//! For a layer mapping an input distribution to output targets through M
//! inducing inputs, the optimal Gaussian over the inducing variables is
//! available in closed form, leaving a bound that only needs the psi
//! statistics, the M×M inducing Gram, the noise, and the output moments:
//!
//! F = o·[ -N/2·ln(2πσ²) + ½ln|K_ZZ| - ½ln|A| - ψ0/(2σ²) + tr(K_ZZ⁻¹Ψ2)/(2σ²) ]
//!     + Σ_j [ -(t̄_jᵀt̄_j + Σ_i v_ij)/(2σ²) + t̄_jᵀΨ1 A⁻¹ Ψ1ᵀ t̄_j/(2σ⁴) ]
//!
//! with A = K_ZZ + Ψ2/σ², o output columns, target means t̄ and per-point
//! target variances v (zero for observed outputs). With deterministic inputs
//! and observed outputs this is exactly the sparse-GP variational free
//! energy, and it is tight at Z = X.

use ndarray::{Array1, Array2};

use super::psi::{psi_statistics, PsiStats};
use crate::kernels::{gram_sym, ArdSqExpKernel};
use crate::numerics::{cholesky, LN_2PI};

/// Input distribution of one layer: observed points or a factorized
/// Gaussian.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Deterministic(&'a Array2<f64>),
    Gaussian {
        mean: &'a Array2<f64>,
        var: &'a Array2<f64>,
    },
}

impl<'a> LayerInput<'a> {
    pub fn len(&self) -> usize {
        match self {
            LayerInput::Deterministic(x) => x.nrows(),
            LayerInput::Gaussian { mean, .. } => mean.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn psi(&self, kernel: &ArdSqExpKernel, z: &Array2<f64>) -> PsiStats {
        match self {
            LayerInput::Deterministic(x) => {
                let zeros = Array2::zeros(x.dim());
                psi_statistics(kernel, z, x, &zeros)
            }
            LayerInput::Gaussian { mean, var } => psi_statistics(kernel, z, mean, var),
        }
    }
}

/// Output targets of one layer: observed responses or the moments of the
/// next hidden node's factorized posterior.
#[derive(Debug, Clone, Copy)]
pub enum LayerTargets<'a> {
    Observed(&'a Array2<f64>),
    Moments {
        mean: &'a Array2<f64>,
        var: &'a Array2<f64>,
    },
}

impl<'a> LayerTargets<'a> {
    fn means(&self) -> &Array2<f64> {
        match self {
            LayerTargets::Observed(y) => y,
            LayerTargets::Moments { mean, .. } => mean,
        }
    }

    fn var_column_sum(&self, j: usize) -> f64 {
        match self {
            LayerTargets::Observed(_) => 0.0,
            LayerTargets::Moments { var, .. } => var.column(j).sum(),
        }
    }

    fn width(&self) -> usize {
        self.means().ncols()
    }
}

/// Collapsed variational bound of one layer. Factorization failures on the
/// inducing Gram (or on A) reject the candidate by returning -∞, which the
/// minimized training objective sees as +∞.
pub fn sparse_layer_bound(
    kernel: &ArdSqExpKernel,
    z: &Array2<f64>,
    input: LayerInput,
    targets: LayerTargets,
    noise: f64,
) -> f64 {
    let psi = input.psi(kernel, z);
    bound_from_psi(kernel, z, &psi, targets, noise)
}

/// Same bound, given precomputed psi statistics.
pub(crate) fn bound_from_psi(
    kernel: &ArdSqExpKernel,
    z: &Array2<f64>,
    psi: &PsiStats,
    targets: LayerTargets,
    noise: f64,
) -> f64 {
    debug_assert!(noise > 0.0);
    let n = psi.psi1.nrows();
    let m = z.nrows();
    let o = targets.width();
    debug_assert_eq!(targets.means().nrows(), n);

    let kzz = gram_sym(kernel, z);
    let lk = match cholesky(&kzz) {
        Ok(f) => f,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut a = &kzz + &(&psi.psi2 / noise);
    // Symmetrize against accumulation drift before factorizing.
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let la = match cholesky(&a) {
        Ok(f) => f,
        Err(_) => return f64::NEG_INFINITY,
    };

    let tr_kinv_psi2 = {
        let solved = lk.solve_mat(&psi.psi2);
        (0..m).map(|i| solved[(i, i)]).sum::<f64>()
    };

    // Three term pairs are nonpositive in exact arithmetic:
    // tr(K_ZZ⁻¹Ψ2) ≤ ψ0, ln|K_ZZ| ≤ ln|A|, and the per-column data term
    // -(sum_sq)/(2σ²) + quad/(2σ⁴) ≤ 0. Ill-conditioned candidates can
    // violate them through the jitter and cancellation; clamping keeps the
    // computed value a lower bound instead of letting the noise explode.
    let trace_term = (tr_kinv_psi2 - psi.psi0).min(0.0) / (2.0 * noise);
    let logdet_term = (0.5 * (lk.log_det() - la.log_det())).min(0.0);

    let per_column = -0.5 * n as f64 * (LN_2PI + noise.ln()) + logdet_term + trace_term;

    let mut total = o as f64 * per_column;
    let means = targets.means();
    for j in 0..o {
        let t = means.column(j);
        let u: Array1<f64> = psi.psi1.t().dot(&t);
        let w = la.solve_lower(&u);
        let quad = w.dot(&w);
        let sum_sq = t.dot(&t) + targets.var_column_sum(j);
        total += (-sum_sq / (2.0 * noise) + quad / (2.0 * noise * noise)).min(0.0);
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}
