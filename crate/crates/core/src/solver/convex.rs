//! Strongly convex minimization over a polyhedron behind a gradient oracle.
//!
//! Single-variable rows become a box handled by projection; the remaining rows
//! go through an augmented Lagrangian whose inner problems are solved by
//! accelerated projected gradient with step `1 / (L + rho ||A||^2)`. Once the
//! active set looks settled, the affine-constrained problem on that set is
//! solved to high accuracy and multipliers are recovered by least squares.

use nalgebra::{DMatrix, DVector};

use super::feasibility::{find_feasible_point, Feasibility};
use super::kkt::kkt_report;
use super::linalg::{dense_rows, power_iteration, pseudo_inverse};
use super::{ConstraintMatrix, SolveOutcome, SolveStatus, SolverOptions};
use crate::error::SolverError;

/// Value and gradient oracle of a smooth convex function.
pub trait SmoothConvex: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }
}

/// `min f(q) s.t. A q <= h` with `f` mu-strongly convex and L-smooth.
pub struct ConvexProblem<'a> {
    pub objective: &'a dyn SmoothConvex,
    pub mu: f64,
    pub lipschitz: f64,
    pub constraints: &'a ConstraintMatrix,
}

/// Checks strong monotonicity and gradient Lipschitz continuity of the oracle
/// on a fixed set of probe pairs.
pub fn check_curvature(f: &dyn SmoothConvex, mu: f64, lipschitz: f64) -> Result<(), SolverError> {
    if !(mu > 0.0 && mu <= lipschitz && lipschitz.is_finite()) {
        return Err(SolverError::InvalidConstants(format!("mu={mu}, lipschitz={lipschitz}")));
    }
    let n = f.dim();
    if n == 0 {
        return Ok(());
    }
    let probe = |k: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|i| scale * (((i + 1) * (k + 3)) as f64 * 0.618_033_988_75).sin())
            .collect()
    };
    for (k, scale) in [(0, 1.0), (1, 5.0), (2, 0.1), (3, 20.0)] {
        let x = probe(k, scale);
        let y = probe(k + 7, scale * 0.5);
        let gx = f.gradient_vec(&x);
        let gy = f.gradient_vec(&y);
        if gx.iter().chain(&gy).any(|v| !v.is_finite()) {
            return Err(SolverError::OracleCurvature("non-finite gradient".into()));
        }
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dist2: f64 = dx.iter().map(|v| v * v).sum();
        if dist2 == 0.0 {
            continue;
        }
        let inner: f64 = dx.iter().zip(&dg).map(|(a, b)| a * b).sum();
        let gnorm2: f64 = dg.iter().map(|v| v * v).sum();
        if inner < mu * dist2 * (1.0 - 1e-9) {
            return Err(SolverError::OracleCurvature(format!(
                "strong monotonicity fails: <dg, dx> = {inner:.3e} < mu |dx|^2 = {:.3e}",
                mu * dist2
            )));
        }
        if gnorm2.sqrt() > lipschitz * dist2.sqrt() * (1.0 + 1e-9) {
            return Err(SolverError::OracleCurvature(format!(
                "gradient change {:.3e} exceeds L |dx| = {:.3e}",
                gnorm2.sqrt(),
                lipschitz * dist2.sqrt()
            )));
        }
    }
    Ok(())
}

struct Split {
    lower: Vec<f64>,
    upper: Vec<f64>,
    general: Vec<usize>,
}

fn split_rows(a: &ConstraintMatrix) -> Split {
    let n = a.cols();
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut general = Vec::new();
    for (j, r) in a.rows().iter().enumerate() {
        let nz: Vec<&(usize, f64)> = r.entries.iter().filter(|e| e.1 != 0.0).collect();
        if nz.len() == 1 {
            let (c, v) = *nz[0];
            let bound = r.rhs / v;
            if v > 0.0 {
                upper[c] = upper[c].min(bound);
            } else {
                lower[c] = lower[c].max(bound);
            }
        } else {
            general.push(j);
        }
    }
    Split { lower, upper, general }
}

fn project_box(x: &mut [f64], split: &Split) {
    for ((v, lo), hi) in x.iter_mut().zip(&split.lower).zip(&split.upper) {
        *v = v.clamp(*lo, *hi);
    }
}

pub fn solve_convex_primal(problem: &ConvexProblem<'_>, options: &SolverOptions) -> Result<SolveOutcome, SolverError> {
    let f = problem.objective;
    let a = problem.constraints;
    let n = f.dim();
    let m = a.len();
    if a.cols() != n {
        return Err(SolverError::Dimension(format!("objective has {n} columns, constraints {}", a.cols())));
    }
    a.check_finite()?;
    check_curvature(f, problem.mu, problem.lipschitz)?;
    let (mu, lip) = (problem.mu, problem.lipschitz);

    let start = match find_feasible_point(a) {
        Feasibility::Feasible { point } => point,
        Feasibility::Infeasible { closest, .. } => {
            return finish(problem, closest, vec![0.0; m], SolveStatus::Infeasible, 0);
        }
    };
    if m == 0 {
        let (q, _) = affine_minimize(f, mu, lip, start, None, options.tol);
        return finish(problem, q, vec![], SolveStatus::Optimal, 0);
    }

    let split = split_rows(a);
    let gen_norm2 = if split.general.is_empty() {
        0.0
    } else {
        power_iteration(n, 50, |v, out| {
            let av: Vec<f64> = split.general.iter().map(|&j| a.row(j).dot(v)).collect();
            out.iter_mut().for_each(|o| *o = 0.0);
            for (&j, &s) in split.general.iter().zip(&av) {
                a.row(j).add_scaled(s, out);
            }
        }) * 1.05
    };
    let mut rho = if gen_norm2 > 0.0 { lip / gen_norm2 } else { 0.0 };
    let cap = options.cap(m, n);

    let mut q = start;
    project_box(&mut q, &split);
    let mut mult = vec![0.0; split.general.len()];
    let mut used = 0usize;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut last_violation = f64::INFINITY;
    let mut inner_tol = 1e-2 * (1.0 + f.gradient_vec(&q).iter().fold(0.0f64, |s, v| s.max(v.abs())));

    while used < cap {
        let step = 1.0 / (lip + rho * gen_norm2);
        let momentum = {
            let kappa = (lip + rho * gen_norm2) / mu;
            (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0)
        };
        // inner: min f + AL penalty over the box
        let mut prev = q.clone();
        let budget = (cap - used).min(20 * n + 200);
        for _ in 0..budget {
            used += 1;
            let y: Vec<f64> = q.iter().zip(&prev).map(|(a, b)| a + momentum * (a - b)).collect();
            let g = al_gradient(f, a, &split.general, &mult, rho, &y);
            let mut next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
            project_box(&mut next, &split);
            let moved = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prev = std::mem::replace(&mut q, next);
            if moved / step <= inner_tol {
                break;
            }
        }
        // multiplier update
        let mut violation = 0.0f64;
        for (k, &j) in split.general.iter().enumerate() {
            let s = a.row(j).dot(&q) - a.row(j).rhs;
            mult[k] = (mult[k] + rho * s).max(0.0);
            violation = violation.max(s.max(0.0));
        }
        if violation > 0.25 * last_violation && rho > 0.0 {
            rho = (rho * 5.0).min(1e8 * lip / gen_norm2.max(f64::MIN_POSITIVE));
        }
        last_violation = violation;
        inner_tol = (inner_tol * 0.2).max(1e-3 * options.tol);

        // polish on the apparent active set
        let working = apparent_active(a, &q, &split, &mult, options.tol);
        if let Some((pq, pl)) = polish(f, mu, lip, a, working, &q, options.tol) {
            let res = kkt(problem, &pq, &pl)?.max_residual();
            if res <= options.tol {
                return finish(problem, pq, pl, SolveStatus::Optimal, used);
            }
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, pq, pl));
            }
        }
        let duals = full_duals(a, &q, &split, &mult, f);
        let res = kkt(problem, &q, &duals)?.max_residual();
        if res <= options.tol {
            return finish(problem, q, duals, SolveStatus::Optimal, used);
        }
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, q.clone(), duals));
        }
    }
    let (_, q, l) = best.expect("at least one outer iteration");
    finish(problem, q, l, SolveStatus::MaxIterations, used)
}

fn al_gradient(f: &dyn SmoothConvex, a: &ConstraintMatrix, general: &[usize], mult: &[f64], rho: f64, x: &[f64]) -> Vec<f64> {
    let mut g = f.gradient_vec(x);
    for (k, &j) in general.iter().enumerate() {
        let r = a.row(j);
        let w = (mult[k] + rho * (r.dot(x) - r.rhs)).max(0.0);
        if w > 0.0 {
            r.add_scaled(w, &mut g);
        }
    }
    g
}

/// Rows with a positive AL multiplier, plus box rows whose bound is touched.
fn apparent_active(a: &ConstraintMatrix, q: &[f64], split: &Split, mult: &[f64], tol: f64) -> Vec<usize> {
    let mut set = Vec::new();
    let general_mult = |j: usize| split.general.iter().position(|&g| g == j).map(|k| mult[k]);
    for (j, r) in a.rows().iter().enumerate() {
        let slack = r.rhs - r.dot(q);
        match general_mult(j) {
            Some(l) => {
                if l > 0.0 || slack < tol {
                    set.push(j);
                }
            }
            None => {
                if slack <= tol * (1.0 + r.rhs.abs()) {
                    set.push(j);
                }
            }
        }
    }
    set
}

/// Multiplier estimate for an AL iterate: general rows from the AL update,
/// box rows from the residual gradient.
fn full_duals(a: &ConstraintMatrix, q: &[f64], split: &Split, mult: &[f64], f: &dyn SmoothConvex) -> Vec<f64> {
    let mut duals = vec![0.0; a.len()];
    for (k, &j) in split.general.iter().enumerate() {
        duals[j] = mult[k];
    }
    let mut g = f.gradient_vec(q);
    for (k, &j) in split.general.iter().enumerate() {
        a.row(j).add_scaled(mult[k], &mut g);
    }
    let mut taken = vec![false; a.cols()];
    for (j, r) in a.rows().iter().enumerate() {
        if split.general.contains(&j) {
            continue;
        }
        let Some(&(c, v)) = r.entries.iter().find(|e| e.1 != 0.0) else {
            continue;
        };
        if taken[c] || (r.rhs - v * q[c]).abs() > 1e-9 * (1.0 + r.rhs.abs()) {
            continue;
        }
        // -g[c] = v * lambda
        let l = -g[c] / v;
        if l > 0.0 {
            duals[j] = l;
            taken[c] = true;
        }
    }
    duals
}

/// Minimizes `f` on `{x : A_W x = h_W}` (or everywhere when `affine` is
/// `None`) by accelerated projected gradient. Returns the point and whether
/// the stopping test was met.
fn affine_minimize(
    f: &dyn SmoothConvex,
    mu: f64,
    lip: f64,
    start: Vec<f64>,
    affine: Option<(&DMatrix<f64>, &DMatrix<f64>, &DVector<f64>)>,
    tol: f64,
) -> (Vec<f64>, bool) {
    let n = start.len();
    let project = |x: &mut Vec<f64>| {
        if let Some((a_w, pinv, h_w)) = affine {
            let xv = DVector::from_column_slice(x);
            let r = a_w * &xv - h_w;
            let corr = a_w.transpose() * (pinv * r);
            for (v, c) in x.iter_mut().zip(corr.iter()) {
                *v -= c;
            }
        }
    };
    let tangent = |g: &[f64]| -> Vec<f64> {
        match affine {
            Some((a_w, pinv, _)) => {
                let gv = DVector::from_column_slice(g);
                let corr = a_w.transpose() * (pinv * (a_w * &gv));
                g.iter().zip(corr.iter()).map(|(a, b)| a - b).collect()
            }
            None => g.to_vec(),
        }
    };
    let mut x = start;
    project(&mut x);
    let mut prev = x.clone();
    let beta = {
        let k = (lip / mu).sqrt();
        (k - 1.0) / (k + 1.0)
    };
    let target = 1e-3 * tol;
    let max_iter = 200 + 50 * ((lip / mu).sqrt() * 40.0) as usize + 10 * n;
    for _ in 0..max_iter {
        let g = f.gradient_vec(&x);
        if tangent(&g).iter().fold(0.0f64, |s, v| s.max(v.abs())) <= target {
            return (x, true);
        }
        let y: Vec<f64> = x.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let gy = f.gradient_vec(&y);
        let mut next: Vec<f64> = y.iter().zip(&gy).map(|(a, b)| a - b / lip).collect();
        project(&mut next);
        prev = std::mem::replace(&mut x, next);
    }
    let g = f.gradient_vec(&x);
    let ok = tangent(&g).iter().fold(0.0f64, |s, v| s.max(v.abs())) <= tol;
    (x, ok)
}

/// Active-set polish with add/drop corrections.
fn polish(
    f: &dyn SmoothConvex,
    mu: f64,
    lip: f64,
    a: &ConstraintMatrix,
    mut working: Vec<usize>,
    start: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = a.len();
    let h_scale = 1.0 + a.rows().iter().fold(0.0f64, |s, r| s.max(r.rhs.abs()));
    let mut x = start.to_vec();
    for _ in 0..(2 * m + 20) {
        working.sort_unstable();
        working.dedup();
        let mut lam = vec![0.0; m];
        if working.is_empty() {
            let (q, _) = affine_minimize(f, mu, lip, x.clone(), None, tol);
            x = q;
        } else {
            let a_w = dense_rows(a, &working);
            let pinv = pseudo_inverse(&(&a_w * a_w.transpose()));
            let h_w = DVector::from_iterator(working.len(), working.iter().map(|&j| a.row(j).rhs));
            let (q, _) = affine_minimize(f, mu, lip, x.clone(), Some((&a_w, &pinv, &h_w)), tol);
            x = q;
            let xv = DVector::from_column_slice(&x);
            if (&a_w * &xv - &h_w).amax() > 1e-9 * h_scale {
                return None;
            }
            let g = DVector::from_vec(f.gradient_vec(&x));
            let l_w = -(&pinv * (&a_w * g));
            for (k, &j) in working.iter().enumerate() {
                lam[j] = l_w[k];
            }
        }
        let lam_scale = 1.0 + lam.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let drop = working
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, lam[j]))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((k, v)) = drop {
            if v < -1e-10 * lam_scale {
                working.remove(k);
                continue;
            }
        }
        let add = (0..m)
            .filter(|j| !working.contains(j))
            .map(|j| (j, a.row(j).dot(&x) - a.row(j).rhs))
            .max_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((j, v)) = add {
            if v > 1e-12 * h_scale {
                working.push(j);
                continue;
            }
        }
        lam.iter_mut().for_each(|l| *l = l.max(0.0));
        return Some((x, lam));
    }
    None
}

fn kkt(problem: &ConvexProblem<'_>, q: &[f64], duals: &[f64]) -> Result<super::KktReport, SolverError> {
    kkt_report(problem.constraints, &problem.objective.gradient_vec(q), q, duals)
}

fn finish(
    problem: &ConvexProblem<'_>,
    primal: Vec<f64>,
    duals: Vec<f64>,
    status: SolveStatus,
    iterations: usize,
) -> Result<SolveOutcome, SolverError> {
    Ok(SolveOutcome {
        kkt: kkt(problem, &primal, &duals)?,
        objective: problem.objective.value(&primal),
        primal,
        duals,
        status,
        iterations,
        unique_duals: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SparseRow;

    /// `0.01 q^2 - 0.1 q + 0.4 q` in one variable.
    struct Ev;
    impl SmoothConvex for Ev {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.01 * x[0] * x[0] - 0.1 * x[0] + 0.4 * x[0]
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            out[0] = 0.02 * x[0] - 0.1 + 0.4;
        }
    }

    struct Flat(usize);
    impl SmoothConvex for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    #[test]
    fn ev_discharge_row_binds() {
        let a = ConstraintMatrix::new(1, vec![SparseRow::new(vec![(0, -1.0)], 0.0)]);
        let p = ConvexProblem {
            objective: &Ev,
            mu: 0.02,
            lipschitz: 0.02,
            constraints: &a,
        };
        let out = solve_convex_primal(&p, &SolverOptions::default()).unwrap();
        assert!(out.is_optimal(), "{out:?}");
        assert!(out.primal[0].abs() < 1e-12);
        assert!((out.duals[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_positive_mu_and_flat_oracles() {
        let a = ConstraintMatrix::empty(2);
        let p = ConvexProblem {
            objective: &Flat(2),
            mu: 0.0,
            lipschitz: 1.0,
            constraints: &a,
        };
        assert!(matches!(
            solve_convex_primal(&p, &SolverOptions::default()),
            Err(SolverError::InvalidConstants(_))
        ));
        let p = ConvexProblem { mu: 0.5, ..p };
        assert!(matches!(
            solve_convex_primal(&p, &SolverOptions::default()),
            Err(SolverError::OracleCurvature(_))
        ));
    }

    #[test]
    fn coupled_rows_and_boxes() {
        // min sum (q_i - 3)^2 s.t. q1 + q2 <= 2, q1 - q2 <= 0.5, 0 <= q <= 10
        struct Shifted;
        impl SmoothConvex for Shifted {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, x: &[f64]) -> f64 {
                x.iter().map(|v| (v - 3.0) * (v - 3.0)).sum()
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * (v - 3.0);
                }
            }
        }
        let a = ConstraintMatrix::new(
            2,
            vec![
                SparseRow::new(vec![(0, 1.0), (1, 1.0)], 2.0),
                SparseRow::new(vec![(0, 1.0), (1, -1.0)], 0.5),
                SparseRow::new(vec![(0, -1.0)], 0.0),
                SparseRow::new(vec![(1, -1.0)], 0.0),
                SparseRow::new(vec![(0, 1.0)], 10.0),
            ],
        );
        let p = ConvexProblem {
            objective: &Shifted,
            mu: 2.0,
            lipschitz: 2.0,
            constraints: &a,
        };
        let out = solve_convex_primal(&p, &SolverOptions::default()).unwrap();
        assert!(out.is_optimal(), "{out:?}");
        assert!((out.primal[0] - 1.0).abs() < 1e-9 && (out.primal[1] - 1.0).abs() < 1e-9);
        assert!((out.duals[0] - 4.0).abs() < 1e-8);
    }
}
