use serde::{Deserialize, Serialize};

use super::{ConstraintMatrix, QpProblem};
use crate::error::SolverError;

/// Residuals of the KKT system of `min f(q) s.t. A q <= h`.
///
/// Stationarity is the max-norm of `grad f(q) + A' lambda`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
    pub stationarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal_feasibility
            .max(self.dual_feasibility)
            .max(self.complementary_slackness)
            .max(self.stationarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    /// Component-wise maximum.
    pub fn merge(&self, other: &KktReport) -> KktReport {
        KktReport {
            primal_feasibility: self.primal_feasibility.max(other.primal_feasibility),
            dual_feasibility: self.dual_feasibility.max(other.dual_feasibility),
            complementary_slackness: self.complementary_slackness.max(other.complementary_slackness),
            stationarity: self.stationarity.max(other.stationarity),
        }
    }
}

/// KKT residuals given the gradient of the minimization-form objective at `primal`.
pub fn kkt_report(
    constraints: &ConstraintMatrix,
    objective_gradient: &[f64],
    primal: &[f64],
    duals: &[f64],
) -> Result<KktReport, SolverError> {
    let n = constraints.cols();
    if primal.len() != n || objective_gradient.len() != n {
        return Err(SolverError::Dimension(format!(
            "primal has {} entries, gradient {}, problem {n}",
            primal.len(),
            objective_gradient.len()
        )));
    }
    if duals.len() != constraints.len() {
        return Err(SolverError::Dimension(format!(
            "{} duals for {} rows",
            duals.len(),
            constraints.len()
        )));
    }
    let mut report = KktReport::default();
    for (r, &l) in constraints.rows().iter().zip(duals) {
        let s = r.dot(primal) - r.rhs;
        report.primal_feasibility = report.primal_feasibility.max(s);
        if l < 0.0 {
            report.dual_feasibility = report.dual_feasibility.max(-l);
        }
        report.complementary_slackness = report.complementary_slackness.max((l * s).abs());
    }
    let at = constraints.transpose_mul(duals);
    report.stationarity = objective_gradient
        .iter()
        .zip(&at)
        .map(|(g, a)| (g + a).abs())
        .fold(0.0, f64::max);
    Ok(report)
}

/// KKT residuals of a diagonal QP at `(primal, duals)`.
pub fn kkt_residuals(problem: &QpProblem, primal: &[f64], duals: &[f64]) -> Result<KktReport, SolverError> {
    if primal.len() != problem.dim() {
        return Err(SolverError::Dimension(format!(
            "primal has {} entries, problem {}",
            primal.len(),
            problem.dim()
        )));
    }
    kkt_report(&problem.constraints, &problem.min_gradient(primal), primal, duals)
}
