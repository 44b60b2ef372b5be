//! Closed-form Gaussian convolutions of the ARD squared-exponential kernel
//! (psi statistics). For factorized Gaussian inputs q(h_i) = N(μ_i, diag ν_i)
//! and inducing inputs Z:
//!
//! - ψ0      = Σ_i E[k(h_i, h_i)] = N·l
//! - Ψ1[i,m] = E[k(h_i, z_m)]
//! - Ψ2[m,m'] = Σ_i E[k(h_i, z_m) k(h_i, z_m')]
//!
//! Each 1-D factor integrates in closed form; deterministic inputs (ν = 0)
//! reduce Ψ1 to the plain cross-covariance and Ψ2 to Ψ1ᵀΨ1.

use ndarray::Array2;

use crate::kernels::{gram, ArdSqExpKernel, Kernel};

/// The three kernel expectations a variational layer bound needs.
#[derive(Debug, Clone)]
pub struct PsiStats {
    pub psi0: f64,
    pub psi1: Array2<f64>,
    pub psi2: Array2<f64>,
}

/// Computes the psi statistics of `kernel` at inducing inputs `z` under the
/// factorized Gaussian with means `q_mean` (N×d) and variances `q_var`
/// (N×d, elementwise ≥ 0; zeros encode deterministic inputs).
pub fn psi_statistics(
    kernel: &ArdSqExpKernel,
    z: &Array2<f64>,
    q_mean: &Array2<f64>,
    q_var: &Array2<f64>,
) -> PsiStats {
    let (n, d) = q_mean.dim();
    assert_eq!(q_var.dim(), (n, d));
    assert_eq!(z.ncols(), d);
    assert_eq!(kernel.dim(), d);
    debug_assert!(q_var.iter().all(|&v| v >= 0.0));

    if q_var.iter().all(|&v| v == 0.0) {
        return deterministic_psi(kernel, z, q_mean);
    }

    let m = z.nrows();
    let l = kernel.variance;
    let rates = &kernel.rates;
    let mean_s = q_mean.as_slice().expect("row-major");
    let var_s = q_var.as_slice().expect("row-major");
    let z_s = z.as_slice().expect("row-major");

    let psi0 = n as f64 * l;

    let mut psi1 = Array2::zeros((n, m));
    {
        let out = psi1.as_slice_mut().expect("row-major");
        for i in 0..n {
            let mu = &mean_s[i * d..(i + 1) * d];
            let nu = &var_s[i * d..(i + 1) * d];
            for mm in 0..m {
                let zr = &z_s[mm * d..(mm + 1) * d];
                let mut expo = 0.0;
                let mut den_prod = 1.0;
                for k in 0..d {
                    let th = rates[k];
                    let den = 1.0 + 2.0 * th * nu[k];
                    let diff = mu[k] - zr[k];
                    expo -= th * diff * diff / den;
                    den_prod *= den;
                }
                out[i * m + mm] = l * expo.exp() / den_prod.sqrt();
            }
        }
    }

    let mut psi2 = Array2::zeros((m, m));
    {
        let l2 = l * l;
        let out = psi2.as_slice_mut().expect("row-major");
        for i in 0..n {
            let mu = &mean_s[i * d..(i + 1) * d];
            let nu = &var_s[i * d..(i + 1) * d];
            for m1 in 0..m {
                let z1 = &z_s[m1 * d..(m1 + 1) * d];
                for m2 in m1..m {
                    let z2 = &z_s[m2 * d..(m2 + 1) * d];
                    let mut expo = 0.0;
                    let mut den_prod = 1.0;
                    for k in 0..d {
                        let th = rates[k];
                        let den = 1.0 + 4.0 * th * nu[k];
                        let dz = z1[k] - z2[k];
                        let dm = mu[k] - 0.5 * (z1[k] + z2[k]);
                        expo -= 0.5 * th * dz * dz + 2.0 * th * dm * dm / den;
                        den_prod *= den;
                    }
                    out[m1 * m + m2] += l2 * expo.exp() / den_prod.sqrt();
                }
            }
        }
        for m1 in 0..m {
            for m2 in 0..m1 {
                out[m1 * m + m2] = out[m2 * m + m1];
            }
        }
    }

    PsiStats { psi0, psi1, psi2 }
}

/// ν = 0 limit: Ψ1 is the plain cross-covariance and Ψ2 = Ψ1ᵀΨ1.
fn deterministic_psi(
    kernel: &ArdSqExpKernel,
    z: &Array2<f64>,
    points: &Array2<f64>,
) -> PsiStats {
    let psi1 = gram(kernel, points, z);
    let psi2 = psi1.t().dot(&psi1);
    PsiStats {
        psi0: points.nrows() as f64 * kernel.variance(),
        psi1,
        psi2,
    }
}
