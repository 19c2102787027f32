//! Exhaustive active-set enumeration for small QPs.
//!
//! For every row subset `S` with `|S| <= min(rows, vars)` and a nonsingular
//! Gram matrix `A_S D A_S'`, the equality-constrained optimum is a KKT point
//! of the full problem iff its multipliers are non-negative and the other rows
//! hold. All such points are collected; the primal is unique, multipliers
//! may not be.

use nalgebra::DVector;

use super::feasibility::{find_feasible_point, Feasibility};
use super::kkt::kkt_residuals;
use super::linalg::{dense_rows, solve_if_nonsingular, weighted_gram};
use super::{QpProblem, SolveOutcome, SolveStatus};
use crate::error::SolverError;

pub const MAX_ORACLE_ROWS: usize = 20;

pub fn brute_force_active_set(problem: &QpProblem) -> Result<SolveOutcome, SolverError> {
    problem.validate()?;
    let a = &problem.constraints;
    let m = a.len();
    if m > MAX_ORACLE_ROWS {
        return Err(SolverError::TooManyRows(m));
    }
    let n = problem.dim();
    let d: Vec<f64> = problem.curvature.iter().map(|c| -1.0 / c).collect();
    let db: Vec<f64> = problem.linear.iter().zip(&d).map(|(b, di)| b * di).collect();
    let h_scale = 1.0 + a.rows().iter().fold(0.0f64, |s, r| s.max(r.rhs.abs()));
    let max_size = m.min(n);

    let mut points: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for mask in 0u32..(1u32 << m) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let mut lam = vec![0.0; m];
        if !set.is_empty() {
            let a_s = dense_rows(a, &set);
            let g = weighted_gram(&a_s, &d);
            let rhs = DVector::from_iterator(set.len(), set.iter().map(|&j| a.row(j).dot(&db) - a.row(j).rhs));
            let Some(sol) = solve_if_nonsingular(&g, &rhs, 1e-10) else {
                continue;
            };
            for (k, &j) in set.iter().enumerate() {
                lam[j] = sol[k];
            }
        }
        let lam_scale = 1.0 + lam.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if lam.iter().any(|&l| l < -1e-10 * lam_scale) {
            continue;
        }
        let q = problem.primal_from_duals(&lam);
        if a.max_violation(&q) > 1e-9 * h_scale {
            continue;
        }
        lam.iter_mut().for_each(|l| *l = l.max(0.0));
        points.push((q, lam));
    }

    if points.is_empty() {
        let closest = match find_feasible_point(a) {
            Feasibility::Infeasible { closest, .. } => closest,
            Feasibility::Feasible { point } => point,
        };
        let duals = vec![0.0; m];
        return Ok(SolveOutcome {
            objective: problem.objective(&closest),
            kkt: kkt_residuals(problem, &closest, &duals)?,
            primal: closest,
            duals,
            status: SolveStatus::Infeasible,
            iterations: 0,
            unique_duals: None,
        });
    }

    let norm = |l: &[f64]| l.iter().map(|v| v * v).sum::<f64>();
    let first = &points[0].1;
    let unique = points
        .iter()
        .all(|(_, l)| l.iter().zip(first).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + y.abs())));
    let mut chosen = 0;
    for (i, (_, l)) in points.iter().enumerate() {
        if norm(l) < norm(&points[chosen].1) - 1e-15 {
            chosen = i;
        }
    }
    let (primal, duals) = points.swap_remove(chosen);
    // multipliers are only pinned down when the active rows are independent
    let active: Vec<usize> = a
        .residuals(&primal)
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= -1e-9 * h_scale)
        .map(|(j, _)| j)
        .collect();
    let independent = active.len() <= n && {
        let a_s = dense_rows(a, &active);
        let g = weighted_gram(&a_s, &vec![1.0; n]);
        active.is_empty() || solve_if_nonsingular(&g, &DVector::zeros(active.len()), 1e-10).is_some()
    };
    Ok(SolveOutcome {
        objective: problem.objective(&primal),
        kkt: kkt_residuals(problem, &primal, &duals)?,
        primal,
        duals,
        status: SolveStatus::Optimal,
        iterations: 0,
        unique_duals: Some(unique && independent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_qp_dual, ConstraintMatrix, SolverOptions, SparseRow};

    #[test]
    fn matches_iterative_solver_on_single_binding_row() {
        let p = QpProblem::new(
            vec![-0.02],
            vec![-0.3],
            ConstraintMatrix::new(1, vec![SparseRow::new(vec![(0, -1.0)], 0.0)]),
        );
        let oracle = brute_force_active_set(&p).unwrap();
        let iter = solve_qp_dual(&p, &SolverOptions::default()).unwrap();
        assert!((oracle.primal[0] - iter.primal[0]).abs() < 1e-10);
        assert!((oracle.duals[0] - iter.duals[0]).abs() < 1e-10);
        assert!((oracle.duals[0] - 0.3).abs() < 1e-12);
        assert_eq!(oracle.unique_duals, Some(true));
    }

    #[test]
    fn infeasible() {
        let rows = vec![SparseRow::new(vec![(0, 1.0)], -1.0), SparseRow::new(vec![(0, -1.0)], -1.0)];
        let p = QpProblem::new(vec![-1.0], vec![0.0], ConstraintMatrix::new(1, rows));
        assert_eq!(brute_force_active_set(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn duplicate_rows_flag_non_unique_duals() {
        let row = SparseRow::new(vec![(0, -1.0)], 0.0);
        let p = QpProblem::new(vec![-0.02], vec![-0.3], ConstraintMatrix::new(1, vec![row.clone(), row]));
        let out = brute_force_active_set(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.unique_duals, Some(false));
        assert!(out.kkt.within(1e-12));
        assert!((out.duals[0] + out.duals[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_instances() {
        let rows = (0..21).map(|k| SparseRow::new(vec![(0, 1.0)], k as f64)).collect();
        let p = QpProblem::new(vec![-1.0], vec![0.0], ConstraintMatrix::new(1, rows));
        assert_eq!(brute_force_active_set(&p).unwrap_err(), SolverError::TooManyRows(21));
    }
}
