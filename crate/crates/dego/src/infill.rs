//! Acquisition functions: expected improvement, probability of improvement,
//! expected violation, and probability of feasibility, in both their
//! analytic Gaussian forms and sample-based forms for surrogates that are
//! only accessible through Monte-Carlo prediction.

use crate::numerics::{norm_cdf, norm_pdf};

/// Infill criterion for the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    ExpectedImprovement,
    ProbabilityOfImprovement,
}

/// How modeled constraints gate or scale the objective criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintPolicy {
    None,
    /// Candidates whose expected violation exceeds `threshold` on any
    /// constraint are ranked by (negated) total excess instead of EI.
    ExpectedViolation { threshold: f64 },
    /// EI is multiplied by the product of per-constraint feasibility
    /// probabilities. `min_prob` is carried as the policy's declared
    /// feasibility floor; the score itself is the plain product form.
    ProbabilityOfFeasibility { min_prob: f64 },
}

/// Whether surrogate predictions enter as Gaussian moments or as raw
/// Monte-Carlo samples (k per candidate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    Gaussian,
    MonteCarlo { samples: usize },
}

/// Infill criterion choice, constraint-handling policy, and prediction mode.
#[derive(Debug, Clone, Copy)]
pub struct AcquisitionSpec {
    pub criterion: Criterion,
    pub policy: ConstraintPolicy,
    pub mode: PredictionMode,
}

impl AcquisitionSpec {
    pub fn unconstrained_ei() -> Self {
        AcquisitionSpec {
            criterion: Criterion::ExpectedImprovement,
            policy: ConstraintPolicy::None,
            mode: PredictionMode::Gaussian,
        }
    }
}

/// One surrogate's prediction at a candidate point.
#[derive(Debug, Clone)]
pub enum Prediction {
    Gaussian { mean: f64, std: f64 },
    Samples(Vec<f64>),
}

/// E[max(0, y_min - Y)] for Y ~ N(mean, std²):
/// (y_min-mean)Φ(z) + std·φ(z) with z = (y_min-mean)/std; the std → 0 limit
/// is the deterministic improvement max(0, y_min-mean).
pub fn expected_improvement(mean: f64, std: f64, y_min: f64) -> f64 {
    debug_assert!(std >= 0.0);
    let diff = y_min - mean;
    if std == 0.0 {
        return diff.max(0.0);
    }
    let z = diff / std;
    (diff * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

/// P[Y ≤ y_min] = Φ((y_min-mean)/std); indicator(mean < y_min) at std = 0.
pub fn probability_of_improvement(mean: f64, std: f64, y_min: f64) -> f64 {
    debug_assert!(std >= 0.0);
    if std == 0.0 {
        return if mean < y_min { 1.0 } else { 0.0 };
    }
    norm_cdf((y_min - mean) / std)
}

/// E[max(0, G - level)] for G ~ N(mean, std²): the EI mirror image,
/// (mean-level)Φ(z) + std·φ(z) with z = (mean-level)/std.
pub fn expected_violation(mean: f64, std: f64, level: f64) -> f64 {
    debug_assert!(std >= 0.0);
    let diff = mean - level;
    if std == 0.0 {
        return diff.max(0.0);
    }
    let z = diff / std;
    (diff * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

/// P[G ≤ tol] = Φ((tol-mean)/std); indicator(mean ≤ tol) at std = 0.
pub fn probability_of_feasibility(mean: f64, std: f64, tol: f64) -> f64 {
    debug_assert!(std >= 0.0);
    if std == 0.0 {
        return if mean <= tol { 1.0 } else { 0.0 };
    }
    norm_cdf((tol - mean) / std)
}

/// Sample-mean estimate of the expected improvement.
pub fn ei_mc(samples: &[f64], y_min: f64) -> f64 {
    assert!(samples.len() >= 2, "ei_mc needs at least two samples");
    samples.iter().map(|&s| (y_min - s).max(0.0)).sum::<f64>() / samples.len() as f64
}

/// Sample-mean estimate of the expected violation.
pub fn ev_mc(samples: &[f64], level: f64) -> f64 {
    assert!(samples.len() >= 2, "ev_mc needs at least two samples");
    samples.iter().map(|&s| (s - level).max(0.0)).sum::<f64>() / samples.len() as f64
}

/// Fraction of samples at or below `tol`.
pub fn pof_mc(samples: &[f64], tol: f64) -> f64 {
    assert!(samples.len() >= 2, "pof_mc needs at least two samples");
    samples.iter().filter(|&&s| s <= tol).count() as f64 / samples.len() as f64
}

fn objective_score(criterion: Criterion, pred: &Prediction, y_min: f64) -> f64 {
    match (criterion, pred) {
        (Criterion::ExpectedImprovement, Prediction::Gaussian { mean, std }) => {
            expected_improvement(*mean, *std, y_min)
        }
        (Criterion::ExpectedImprovement, Prediction::Samples(s)) => ei_mc(s, y_min),
        (Criterion::ProbabilityOfImprovement, Prediction::Gaussian { mean, std }) => {
            probability_of_improvement(*mean, *std, y_min)
        }
        (Criterion::ProbabilityOfImprovement, Prediction::Samples(s)) => {
            // Empirical improvement probability.
            s.iter().filter(|&&v| v < y_min).count() as f64 / s.len() as f64
        }
    }
}

fn violation_of(pred: &Prediction, level: f64) -> f64 {
    match pred {
        Prediction::Gaussian { mean, std } => expected_violation(*mean, *std, level),
        Prediction::Samples(s) => ev_mc(s, level),
    }
}

fn feasibility_of(pred: &Prediction, tol: f64) -> f64 {
    match pred {
        Prediction::Gaussian { mean, std } => probability_of_feasibility(*mean, *std, tol),
        Prediction::Samples(s) => pof_mc(s, tol),
    }
}

/// Scalar acquisition score to maximize. `y_min` is the best feasible
/// observed objective; while no feasible point has been observed the score
/// ignores the objective entirely and minimizes total expected violation
/// (pure feasibility search). Under the expected-violation policy a
/// candidate passing the threshold on every constraint scores its EI, and a
/// violating candidate scores the strictly negative value
/// -(Σ excess over threshold), so every gate-feasible candidate outranks
/// every gate-infeasible one. Constraints are feasible at level zero.
pub fn acquisition_value(
    spec: &AcquisitionSpec,
    objective: &Prediction,
    constraints: &[Prediction],
    y_min: Option<f64>,
) -> f64 {
    let y_min = match y_min {
        Some(v) => v,
        None => {
            debug_assert!(
                !constraints.is_empty(),
                "unconstrained acquisition requires an incumbent"
            );
            return -constraints.iter().map(|c| violation_of(c, 0.0)).sum::<f64>();
        }
    };
    match spec.policy {
        ConstraintPolicy::None => objective_score(spec.criterion, objective, y_min),
        ConstraintPolicy::ExpectedViolation { threshold } => {
            let excess: f64 = constraints
                .iter()
                .map(|c| (violation_of(c, 0.0) - threshold).max(0.0))
                .sum();
            if excess > 0.0 {
                -excess
            } else {
                objective_score(spec.criterion, objective, y_min)
            }
        }
        ConstraintPolicy::ProbabilityOfFeasibility { .. } => {
            let pof: f64 = constraints.iter().map(|c| feasibility_of(c, 0.0)).product();
            objective_score(spec.criterion, objective, y_min) * pof
        }
    }
}
