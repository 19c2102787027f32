//! Phase-1 search for a point satisfying `A q <= h`.
//!
//! Minimizes the squared hinge `1/2 ||(A q - h)^+||^2` with restarted FISTA,
//! periodically snapping the iterate onto the violated rows with a
//! minimum-norm correction. A positive minimum certifies infeasibility.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::linalg::{dense_rows, power_iteration, solve_psd, weighted_gram};
use super::ConstraintMatrix;

/// Max violation above which a problem is declared infeasible.
pub const INFEASIBILITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible { point: Vec<f64> },
    Infeasible { max_violation: f64, closest: Vec<f64> },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

fn hinge(a: &ConstraintMatrix, x: &[f64]) -> (f64, Vec<f64>) {
    let r: Vec<f64> = a.residuals(x).into_iter().map(|v| v.max(0.0)).collect();
    (0.5 * r.iter().map(|v| v * v).sum::<f64>(), r)
}

/// Pushes the violated rows to equality by a minimum-norm step, a few rounds.
fn snap(a: &ConstraintMatrix, x: &[f64], tol: f64) -> Option<Vec<f64>> {
    let mut set: Vec<usize> = Vec::new();
    let mut y = x.to_vec();
    for _ in 0..10 {
        let res = a.residuals(&y);
        let mut grew = false;
        for (j, &r) in res.iter().enumerate() {
            if r > tol && !set.contains(&j) {
                set.push(j);
                grew = true;
            }
        }
        if !grew {
            return (a.max_violation(&y) <= tol).then_some(y);
        }
        set.sort_unstable();
        let a_s = dense_rows(a, &set);
        let g = weighted_gram(&a_s, &vec![1.0; a.cols()]);
        let rhs = DVector::from_iterator(set.len(), set.iter().map(|&j| -res[j]));
        let w = solve_psd(&g, &rhs);
        let d = a_s.transpose() * w;
        for (yi, di) in y.iter_mut().zip(d.iter()) {
            *yi += di;
        }
    }
    (a.max_violation(&y) <= tol).then_some(y)
}

pub fn find_feasible_point(a: &ConstraintMatrix) -> Feasibility {
    let n = a.cols();
    let scale = 1.0 + a.rows().iter().fold(0.0f64, |m, r| m.max(r.rhs.abs()));
    let tight = 1e-12 * scale;
    let x0 = vec![0.0; n];
    if a.max_violation(&x0) <= tight {
        return Feasibility::Feasible { point: x0 };
    }
    if let Some(p) = snap(a, &x0, tight) {
        return Feasibility::Feasible { point: p };
    }
    let lip = 1.05
        * power_iteration(n, 50, |v, out| {
            let av: Vec<f64> = a.rows().iter().map(|r| r.dot(v)).collect();
            out.copy_from_slice(&a.transpose_mul(&av));
        });
    if lip == 0.0 {
        // every row is zero; only the sign of h matters
        let v = a.max_violation(&x0);
        return Feasibility::Infeasible {
            max_violation: v,
            closest: x0,
        };
    }
    let step = 1.0 / lip;
    let cap = 50 * (a.len() + n) + 2000;
    let mut x = x0.clone();
    let mut y = x0;
    let mut t = 1.0f64;
    let (mut fx, _) = hinge(a, &x);
    let mut checkpoint = fx;
    for k in 1..=cap {
        let (_, r) = hinge(a, &y);
        let g = a.transpose_mul(&r);
        let x_new: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let (f_new, _) = hinge(a, &x_new);
        if f_new > fx {
            // function-value restart
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;
        if a.max_violation(&x) <= tight {
            return Feasibility::Feasible { point: x };
        }
        if k % 25 == 0 {
            if let Some(p) = snap(a, &x, tight) {
                return Feasibility::Feasible { point: p };
            }
        }
        if k % 200 == 0 {
            if fx > (1.0 - 1e-9) * checkpoint {
                break;
            }
            checkpoint = fx;
        }
    }
    let v = a.max_violation(&x);
    if v <= INFEASIBILITY_THRESHOLD {
        Feasibility::Feasible { point: x }
    } else {
        Feasibility::Infeasible {
            max_violation: v,
            closest: x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SparseRow;

    #[test]
    fn box_containing_origin() {
        let a = ConstraintMatrix::new(
            2,
            vec![
                SparseRow::new(vec![(0, 1.0)], 5.0),
                SparseRow::new(vec![(0, -1.0)], 0.0),
                SparseRow::new(vec![(1, 1.0)], 5.0),
                SparseRow::new(vec![(1, -1.0)], 0.0),
            ],
        );
        assert_eq!(find_feasible_point(&a), Feasibility::Feasible { point: vec![0.0, 0.0] });
    }

    #[test]
    fn energy_requirement_beyond_power_limits() {
        // q1 + q2 >= 10 with q1, q2 <= 4
        let a = ConstraintMatrix::new(
            2,
            vec![
                SparseRow::new(vec![(0, 1.0)], 4.0),
                SparseRow::new(vec![(1, 1.0)], 4.0),
                SparseRow::new(vec![(0, -1.0), (1, -1.0)], -10.0),
            ],
        );
        match find_feasible_point(&a) {
            Feasibility::Infeasible { max_violation, .. } => assert!(max_violation > 0.5, "{max_violation}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn equality_pair_is_found_exactly() {
        // 1 <= q1 + 2 q2 <= 1, q >= 0.2
        let a = ConstraintMatrix::new(
            2,
            vec![
                SparseRow::new(vec![(0, 1.0), (1, 2.0)], 1.0),
                SparseRow::new(vec![(0, -1.0), (1, -2.0)], -1.0),
                SparseRow::new(vec![(0, -1.0)], -0.2),
                SparseRow::new(vec![(1, -1.0)], -0.2),
            ],
        );
        match find_feasible_point(&a) {
            Feasibility::Feasible { point } => assert!(a.max_violation(&point) <= 1e-11),
            other => panic!("{other:?}"),
        }
    }
}
