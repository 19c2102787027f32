//! Solvers for strictly concave maximization (equivalently strongly convex
//! minimization) over polyhedra, with multiplier extraction.
//!
//! * [`solve_qp_dual`]: diagonal quadratic objective, accelerated projected
//!   gradient on the dual followed by an active-set polish.
//! * [`solve_convex_primal`]: smooth strongly convex objective behind a
//!   gradient oracle, augmented Lagrangian followed by the same polish.
//! * [`brute_force_active_set`]: exhaustive enumeration, used as a test oracle.
//!
//! Every solver starts with a phase-1 feasibility search so infeasible
//! instances are reported as such rather than as non-convergence.

mod convex;
pub mod feasibility;
mod kkt;
mod linalg;
mod oracle;
mod qp;

pub use convex::{check_curvature, solve_convex_primal, ConvexProblem, SmoothConvex};
pub use feasibility::{find_feasible_point, Feasibility};
pub use kkt::{kkt_report, kkt_residuals, KktReport};
pub use oracle::brute_force_active_set;
pub use qp::solve_qp_dual;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// `sum(coef * x[col]) <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn new(entries: Vec<(usize, f64)>, rhs: f64) -> Self {
        SparseRow { entries, rhs }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(c, a)| a * x[c]).sum()
    }

    /// `out += scale * row`.
    pub fn add_scaled(&self, scale: f64, out: &mut [f64]) {
        for &(c, a) in &self.entries {
            out[c] += scale * a;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, a)| a * a).sum()
    }

    pub fn shares_support(&self, other: &SparseRow) -> bool {
        self.entries
            .iter()
            .any(|&(c, a)| a != 0.0 && other.entries.iter().any(|&(d, b)| d == c && b != 0.0))
    }
}

/// Row-sparse constraint matrix `A q <= h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    cols: usize,
    rows: Vec<SparseRow>,
}

impl ConstraintMatrix {
    pub fn new(cols: usize, rows: Vec<SparseRow>) -> Self {
        debug_assert!(rows.iter().all(|r| r.entries.iter().all(|&(c, _)| c < cols)));
        ConstraintMatrix { cols, rows }
    }

    pub fn empty(cols: usize) -> Self {
        ConstraintMatrix { cols, rows: Vec::new() }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &SparseRow {
        &self.rows[j]
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    pub fn set_rhs(&mut self, j: usize, rhs: f64) {
        self.rows[j].rhs = rhs;
    }

    /// `A x - h`.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x) - r.rhs).collect()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.dot(x) - r.rhs).fold(0.0, f64::max)
    }

    /// `A^T y`.
    pub fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &v) in self.rows.iter().zip(y) {
            if v != 0.0 {
                r.add_scaled(v, &mut out);
            }
        }
        out
    }

    /// Block-diagonal stack; columns and rows of later blocks are shifted.
    pub fn block_diagonal(blocks: &[&ConstraintMatrix]) -> Self {
        let mut cols = 0;
        let mut rows = Vec::new();
        for b in blocks {
            for r in &b.rows {
                rows.push(SparseRow::new(r.entries.iter().map(|&(c, a)| (c + cols, a)).collect(), r.rhs));
            }
            cols += b.cols;
        }
        ConstraintMatrix { cols, rows }
    }

    pub(crate) fn check_finite(&self) -> Result<(), SolverError> {
        for (j, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() || r.entries.iter().any(|&(_, a)| !a.is_finite()) {
                return Err(SolverError::NonFinite(format!("constraint row {j}")));
            }
        }
        Ok(())
    }
}

/// Column label inside a market-level problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarKey {
    pub prosumer: u32,
    pub appliance: String,
    /// 1-based.
    pub period: usize,
}

/// `max 1/2 q' diag(curvature) q + linear' q  s.t.  A q <= h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub curvature: Vec<f64>,
    pub linear: Vec<f64>,
    pub constraints: ConstraintMatrix,
    /// Optional labels, one per column (empty for anonymous problems).
    #[serde(default)]
    pub columns: Vec<VarKey>,
}

impl QpProblem {
    pub fn new(curvature: Vec<f64>, linear: Vec<f64>, constraints: ConstraintMatrix) -> Self {
        QpProblem {
            curvature,
            linear,
            constraints,
            columns: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.curvature.len();
        if self.linear.len() != n || self.constraints.cols() != n {
            return Err(SolverError::Dimension(format!(
                "curvature {n}, linear {}, constraint columns {}",
                self.linear.len(),
                self.constraints.cols()
            )));
        }
        if !self.columns.is_empty() && self.columns.len() != n {
            return Err(SolverError::Dimension(format!("{} column labels for {n} columns", self.columns.len())));
        }
        for (i, &c) in self.curvature.iter().enumerate() {
            if !(c < 0.0) || !c.is_finite() {
                return Err(SolverError::NotStrictlyConcave { index: i, value: c });
            }
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("linear term".into()));
        }
        self.constraints.check_finite()
    }

    /// Primal objective (maximization form).
    pub fn objective(&self, q: &[f64]) -> f64 {
        self.curvature
            .iter()
            .zip(&self.linear)
            .zip(q)
            .map(|((&l, &b), &x)| 0.5 * l * x * x + b * x)
            .sum()
    }

    /// Lagrangian dual function `g(lambda) = max_q L(q, lambda)`; it upper
    /// bounds the primal optimum and equals it at an optimal multiplier.
    pub fn dual_objective(&self, lambda: &[f64]) -> f64 {
        let at = self.constraints.transpose_mul(lambda);
        let g: f64 = self
            .constraints
            .rows()
            .iter()
            .zip(lambda)
            .map(|(r, &l)| l * r.rhs)
            .sum();
        g - self
            .linear
            .iter()
            .zip(&at)
            .zip(&self.curvature)
            .map(|((b, a), c)| 0.5 * (b - a) * (b - a) / c)
            .sum::<f64>()
    }

    /// Stationary point of the Lagrangian for fixed multipliers.
    pub fn primal_from_duals(&self, lambda: &[f64]) -> Vec<f64> {
        let at = self.constraints.transpose_mul(lambda);
        (0..self.dim())
            .map(|i| -(self.linear[i] - at[i]) / self.curvature[i])
            .collect()
    }

    /// Gradient of the minimization-form objective `-(1/2 q'Λq + b'q)`.
    pub fn min_gradient(&self, q: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| -(self.curvature[i] * q[i] + self.linear[i]))
            .collect()
    }

    /// Block-diagonal stack of independent problems.
    pub fn stack(parts: &[&QpProblem]) -> QpProblem {
        let blocks: Vec<&ConstraintMatrix> = parts.iter().map(|p| &p.constraints).collect();
        let labelled = parts.iter().all(|p| !p.columns.is_empty());
        QpProblem {
            curvature: parts.iter().flat_map(|p| p.curvature.iter().copied()).collect(),
            linear: parts.iter().flat_map(|p| p.linear.iter().copied()).collect(),
            constraints: ConstraintMatrix::block_diagonal(&blocks),
            columns: if labelled {
                parts.iter().flat_map(|p| p.columns.iter().cloned()).collect()
            } else {
                Vec::new()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    /// Objective value in the solver's native sense (maximization for QPs,
    /// minimization for the convex solver).
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt: KktReport,
    pub iterations: usize,
    /// Set by the brute-force oracle: `Some(false)` when several distinct
    /// multiplier vectors satisfy the KKT system.
    #[serde(default)]
    pub unique_duals: Option<bool>,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on every KKT residual for an `Optimal` status.
    pub tol: f64,
    /// Iteration cap; `None` means `100 * (rows + vars)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iterations: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Self::default()
        }
    }

    pub(crate) fn cap(&self, rows: usize, vars: usize) -> usize {
        self.max_iterations.unwrap_or(100 * (rows + vars)).max(1)
    }
}
