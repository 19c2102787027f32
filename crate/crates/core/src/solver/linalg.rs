//! Small dense helpers for active-set subsystems.

use nalgebra::{DMatrix, DVector};

use super::ConstraintMatrix;

/// Dense `A_S` for the row subset `set`.
pub(crate) fn dense_rows(a: &ConstraintMatrix, set: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(set.len(), a.cols());
    for (i, &j) in set.iter().enumerate() {
        for &(c, v) in &a.row(j).entries {
            m[(i, c)] += v;
        }
    }
    m
}

/// `A_S diag(w) A_S^T`.
pub(crate) fn weighted_gram(a_s: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = a_s.clone();
    for (c, &wc) in w.iter().enumerate() {
        scaled.column_mut(c).scale_mut(wc);
    }
    &scaled * a_s.transpose()
}

/// Solves `G x = r` for symmetric positive semidefinite `G`. Falls back to the
/// minimum-norm least-squares solution when `G` is (numerically) singular.
pub(crate) fn solve_psd(g: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let n = g.nrows();
    if n == 0 {
        return DVector::zeros(0);
    }
    if let Some(x) = solve_if_nonsingular(g, r, 1e-12) {
        return x;
    }
    pseudo_solve(g, r)
}

/// Cholesky solve, or `None` if a pivot is below `rel * max diag`.
pub(crate) fn solve_if_nonsingular(g: &DMatrix<f64>, r: &DVector<f64>, rel: f64) -> Option<DVector<f64>> {
    let scale = g.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let chol = g.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..g.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < rel * scale {
        return None;
    }
    Some(chol.solve(r))
}

pub(crate) fn pseudo_solve(g: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let eps = 1e-12 * smax.max(f64::MIN_POSITIVE);
    svd.solve(r, eps).unwrap_or_else(|_| DVector::zeros(g.ncols()))
}

/// Moore-Penrose pseudo-inverse of a PSD matrix.
pub(crate) fn pseudo_inverse(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let smax = g.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g.clone()
        .pseudo_inverse(1e-12 * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(n, n))
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
pub(crate) fn power_iteration(n: usize, iterations: usize, apply: impl Fn(&[f64], &mut [f64])) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-symmetric start so no eigenvector is missed by accident
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        apply(&v, &mut w);
        estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut w);
    }
    estimate.max(0.0)
}
