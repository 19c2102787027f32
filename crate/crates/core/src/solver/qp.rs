//! Dual projected-gradient QP solver.
//!
//! With `D = -diag(curvature)^-1` the dual function is
//! `g(l) = 1/2 (b - A'l)' D (b - A'l) + l'h`, minimized over `l >= 0`; its
//! gradient is `h - A q(l)` with `q(l) = D (b - A'l)`. FISTA with gradient
//! restarts identifies the active set, then an exact equality-constrained
//! solve on that set (with add/drop corrections) removes the remaining error.

use nalgebra::DVector;

use super::feasibility::{find_feasible_point, Feasibility};
use super::kkt::kkt_residuals;
use super::linalg::{dense_rows, power_iteration, solve_if_nonsingular, solve_psd, weighted_gram};
use super::{ConstraintMatrix, QpProblem, SolveOutcome, SolveStatus, SolverOptions};
use crate::error::SolverError;

const POLISH_EVERY: usize = 20;

pub fn solve_qp_dual(problem: &QpProblem, options: &SolverOptions) -> Result<SolveOutcome, SolverError> {
    problem.validate()?;
    let n = problem.dim();
    let m = problem.constraints.len();
    let d: Vec<f64> = problem.curvature.iter().map(|c| -1.0 / c).collect();

    if m == 0 {
        let q = problem.primal_from_duals(&[]);
        return finish(problem, q, vec![], SolveStatus::Optimal, 0);
    }
    if let Feasibility::Infeasible { closest, .. } = find_feasible_point(&problem.constraints) {
        return finish(problem, closest, vec![0.0; m], SolveStatus::Infeasible, 0);
    }

    let a = &problem.constraints;
    let lip = 1.05
        * power_iteration(m, 50, |v, out| {
            let mut u = a.transpose_mul(v);
            u.iter_mut().zip(&d).for_each(|(x, di)| *x *= di);
            for (o, r) in out.iter_mut().zip(a.rows()) {
                *o = r.dot(&u);
            }
        });
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let cap = options.cap(m, n);

    let mut lam = vec![0.0; m];
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for k in 1..=cap {
        let q = problem.primal_from_duals(&y);
        let lam_new: Vec<f64> = a
            .rows()
            .iter()
            .zip(&y)
            .map(|(r, &yj)| (yj + step * (r.dot(&q) - r.rhs)).max(0.0))
            .collect();
        let restart: f64 = y
            .iter()
            .zip(&lam_new)
            .zip(&lam)
            .map(|((yj, nj), lj)| (yj - nj) * (nj - lj))
            .sum();
        if restart > 0.0 {
            t = 1.0;
            y = lam_new.clone();
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            y = lam_new.iter().zip(&lam).map(|(a, b)| (a + beta * (a - b)).max(0.0)).collect();
            t = t_new;
        }
        lam = lam_new;

        if k % POLISH_EVERY == 0 || k == cap {
            // the polished point is exact up to rounding, so it wins over an
            // iterate that merely meets the tolerance
            if let Some((q, l)) = refine(problem, &d, independent_by_weight(a, &d, &lam)) {
                let res = kkt_residuals(problem, &q, &l)?.max_residual();
                if res <= options.tol {
                    return finish(problem, q, l, SolveStatus::Optimal, k);
                }
                if best.as_ref().is_none_or(|b| res < b.0) {
                    best = Some((res, q, l));
                }
            }
            let q = problem.primal_from_duals(&lam);
            let res = kkt_residuals(problem, &q, &lam)?.max_residual();
            if res <= options.tol {
                return finish(problem, q, lam, SolveStatus::Optimal, k);
            }
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, q, lam.clone()));
            }
        }
    }
    let (_, q, l) = best.expect("at least one evaluation at the cap");
    finish(problem, q, l, SolveStatus::MaxIterations, cap)
}

fn finish(
    problem: &QpProblem,
    primal: Vec<f64>,
    duals: Vec<f64>,
    status: SolveStatus,
    iterations: usize,
) -> Result<SolveOutcome, SolverError> {
    let kkt = kkt_residuals(problem, &primal, &duals)?;
    Ok(SolveOutcome {
        objective: problem.objective(&primal),
        primal,
        duals,
        status,
        kkt,
        iterations,
        unique_duals: None,
    })
}

/// Rows with a positive multiplier, largest first, skipping any row that is
/// linearly dependent on those already taken.
fn independent_by_weight(a: &ConstraintMatrix, d: &[f64], lam: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lam.len()).filter(|&j| lam[j] > 0.0).collect();
    order.sort_by(|&x, &y| lam[y].total_cmp(&lam[x]));
    let mut set = Vec::with_capacity(order.len());
    for j in order {
        if dependence(a, d, &set, j).is_none() {
            set.push(j);
        }
    }
    set
}

/// Coefficients `c` with `a_j = sum c_k a_k` over `working` (in `D`-weighted
/// least squares), or `None` when `a_j` is independent of those rows.
fn dependence(a: &ConstraintMatrix, d: &[f64], working: &[usize], j: usize) -> Option<Vec<f64>> {
    let mut with_j = working.to_vec();
    with_j.push(j);
    let g = weighted_gram(&dense_rows(a, &with_j), d);
    if solve_if_nonsingular(&g, &DVector::zeros(with_j.len()), 1e-10).is_some() {
        return None;
    }
    if working.is_empty() {
        return Some(vec![]);
    }
    let a_w = dense_rows(a, working);
    let g_w = weighted_gram(&a_w, d);
    let row_j = dense_rows(a, &[j]);
    let rhs = DVector::from_iterator(working.len(), (0..working.len()).map(|k| {
        (0..a.cols()).map(|c| a_w[(k, c)] * d[c] * row_j[(0, c)]).sum::<f64>()
    }));
    Some(solve_psd(&g_w, &rhs).iter().copied().collect())
}

/// Equality-constrained solve on a working set with add/drop corrections.
/// Returns `None` if the set turns out inconsistent or the loop does not settle.
fn refine(problem: &QpProblem, d: &[f64], mut working: Vec<usize>) -> Option<(Vec<f64>, Vec<f64>)> {
    let a = &problem.constraints;
    let m = a.len();
    let h_scale = 1.0 + a.rows().iter().fold(0.0f64, |s, r| s.max(r.rhs.abs()));
    let db: Vec<f64> = problem.linear.iter().zip(d).map(|(b, di)| b * di).collect();
    for _ in 0..(2 * m + 20) {
        working.sort_unstable();
        let mut lam = vec![0.0; m];
        if !working.is_empty() {
            let a_s = dense_rows(a, &working);
            let g = weighted_gram(&a_s, d);
            let rhs = DVector::from_iterator(working.len(), working.iter().map(|&j| a.row(j).dot(&db) - a.row(j).rhs));
            let sol = solve_psd(&g, &rhs);
            for (k, &j) in working.iter().enumerate() {
                lam[j] = sol[k];
            }
        }
        let q = problem.primal_from_duals(&lam);
        if working.iter().any(|&j| (a.row(j).dot(&q) - a.row(j).rhs).abs() > 1e-9 * h_scale) {
            return None;
        }
        let lam_scale = 1.0 + lam.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let drop = working
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, lam[j]))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((k, v)) = drop {
            if v < -1e-12 * lam_scale {
                working.remove(k);
                continue;
            }
        }
        let mut violated: Vec<(usize, f64)> = (0..m)
            .filter(|j| !working.contains(j))
            .map(|j| (j, a.row(j).dot(&q) - a.row(j).rhs))
            .filter(|&(_, v)| v > 1e-12 * h_scale)
            .collect();
        violated.sort_by(|x, y| y.1.total_cmp(&x.1));
        let mut entering = None;
        for (j, v) in violated {
            match dependence(a, d, &working, j) {
                None => {
                    entering = Some((j, None));
                    break;
                }
                // a dependent row inherits the rounding of the working rows,
                // amplified by its coefficients
                Some(c) if v > 1e-12 * h_scale * (1.0 + c.iter().map(|x| x.abs()).sum::<f64>()) => {
                    entering = Some((j, Some(c)));
                    break;
                }
                Some(_) => {}
            }
        }
        if let Some((j, dep)) = entering {
            if let Some(c) = dep {
                // a_j = sum c_k a_k: exchange it for the row whose
                // multiplier reaches zero first along that direction
                let out = working
                    .iter()
                    .zip(c.iter())
                    .filter(|(_, &ck)| ck > 1e-12)
                    .min_by(|x, y| (lam[*x.0] / x.1).total_cmp(&(lam[*y.0] / y.1)))
                    .map(|(&k, _)| k)?;
                working.retain(|&k| k != out);
            }
            working.push(j);
            continue;
        }
        lam.iter_mut().for_each(|l| *l = l.max(0.0));
        return Some((q, lam));
    }
    None
}
