use serde::{Deserialize, Serialize};

use super::{Behavior, Horizon, Prosumer};
use crate::error::ModelError;
use crate::solver::{ConstraintMatrix, SparseRow};

/// One `coefficient * q(appliance, period)` term of a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub appliance: String,
    /// 1-based.
    pub period: usize,
    pub coefficient: f64,
}

/// Which requirement a compiled row came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintOrigin {
    PowerUpper { appliance: String, period: usize },
    PowerLower { appliance: String, period: usize },
    WindowUpper { appliance: String, window: usize },
    WindowLower { appliance: String, window: usize },
    NetBuying { period: usize },
}

impl std::fmt::Display for ConstraintOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintOrigin::PowerUpper { appliance, period } => write!(f, "{appliance} max power t={period}"),
            ConstraintOrigin::PowerLower { appliance, period } => write!(f, "{appliance} min power t={period}"),
            ConstraintOrigin::WindowUpper { appliance, window } => write!(f, "{appliance} window {window} max energy"),
            ConstraintOrigin::WindowLower { appliance, window } => write!(f, "{appliance} window {window} min energy"),
            ConstraintOrigin::NetBuying { period } => write!(f, "net buying t={period}"),
        }
    }
}

/// `sum(terms) <= rhs` owned by one prosumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralLinearConstraint {
    pub owner: u32,
    pub index: usize,
    pub terms: Vec<Term>,
    pub rhs: f64,
    pub origin: ConstraintOrigin,
}

/// Compiles power bounds, energy windows and behaviour rows, in that order.
pub fn compile_constraints(prosumer: &Prosumer, horizon: Horizon) -> Result<Vec<GeneralLinearConstraint>, ModelError> {
    let h = horizon.periods();
    let mut rows: Vec<(Vec<Term>, f64, ConstraintOrigin)> = Vec::new();
    let term = |a: &str, t: usize, c: f64| Term {
        appliance: a.to_string(),
        period: t,
        coefficient: c,
    };

    for a in &prosumer.appliances {
        for t in 0..h {
            if let Some(hi) = a.upper(t) {
                finite(hi, || format!("prosumer {} {} q_upper[{}]", prosumer.id, a.id, t + 1))?;
                rows.push((
                    vec![term(&a.id, t + 1, 1.0)],
                    hi,
                    ConstraintOrigin::PowerUpper {
                        appliance: a.id.clone(),
                        period: t + 1,
                    },
                ));
            }
            if let Some(lo) = a.lower(t) {
                finite(lo, || format!("prosumer {} {} q_lower[{}]", prosumer.id, a.id, t + 1))?;
                rows.push((
                    vec![term(&a.id, t + 1, -1.0)],
                    -lo,
                    ConstraintOrigin::PowerLower {
                        appliance: a.id.clone(),
                        period: t + 1,
                    },
                ));
            }
        }
    }

    for a in &prosumer.appliances {
        for (w, win) in a.energy_windows.iter().enumerate() {
            let ctx = format!("prosumer {} appliance {} window {}", prosumer.id, a.id, w + 1);
            if win.periods.len() != win.alpha.len() {
                return Err(ModelError::LengthMismatch {
                    field: format!("{ctx} alpha"),
                    expected: win.periods.len(),
                    found: win.alpha.len(),
                });
            }
            let mut seen = vec![false; h];
            let mut terms = Vec::new();
            for (&t, &alpha) in win.periods.iter().zip(&win.alpha) {
                if t == 0 || t > h {
                    return Err(ModelError::UnknownPeriod {
                        context: ctx,
                        period: t,
                        horizon: h,
                    });
                }
                if std::mem::replace(&mut seen[t - 1], true) {
                    return Err(ModelError::DuplicatePeriod { context: ctx, period: t });
                }
                finite(alpha, || format!("{ctx} alpha"))?;
                if alpha != 0.0 {
                    terms.push(term(&a.id, t, alpha));
                }
            }
            if terms.is_empty() && (win.energy_upper.is_some() || win.energy_lower.is_some()) {
                return Err(ModelError::DegenerateRow { context: ctx });
            }
            if let Some(hi) = win.energy_upper {
                finite(hi, || format!("{ctx} energy_upper"))?;
                rows.push((
                    terms.clone(),
                    hi,
                    ConstraintOrigin::WindowUpper {
                        appliance: a.id.clone(),
                        window: w + 1,
                    },
                ));
            }
            if let Some(lo) = win.energy_lower {
                finite(lo, || format!("{ctx} energy_lower"))?;
                let negated = terms
                    .iter()
                    .map(|x| Term {
                        coefficient: -x.coefficient,
                        ..x.clone()
                    })
                    .collect();
                rows.push((
                    negated,
                    -lo,
                    ConstraintOrigin::WindowLower {
                        appliance: a.id.clone(),
                        window: w + 1,
                    },
                ));
            }
        }
    }

    if prosumer.behavior == Behavior::NetBuyer {
        if prosumer.appliances.is_empty() {
            return Err(ModelError::DegenerateRow {
                context: format!("prosumer {} net-buying row without appliances", prosumer.id),
            });
        }
        for t in 0..h {
            let terms = prosumer.appliances.iter().map(|a| term(&a.id, t + 1, -1.0)).collect();
            rows.push((terms, 0.0, ConstraintOrigin::NetBuying { period: t + 1 }));
        }
    }

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(index, (terms, rhs, origin))| GeneralLinearConstraint {
            owner: prosumer.id,
            index,
            terms,
            rhs,
            origin,
        })
        .collect())
}

fn finite(v: f64, ctx: impl FnOnce() -> String) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { context: ctx() })
    }
}

/// Sparse matrix over the prosumer's columns (`appliance * H + period`).
pub(crate) fn to_matrix(prosumer: &Prosumer, horizon: Horizon, rows: &[GeneralLinearConstraint]) -> ConstraintMatrix {
    let cols = prosumer.columns(horizon);
    let sparse = rows
        .iter()
        .map(|r| {
            let entries = r
                .terms
                .iter()
                .map(|t| {
                    let a = prosumer.appliance_index(&t.appliance).expect("compiled term names an owned appliance");
                    (prosumer.column(horizon, a, t.period - 1), t.coefficient)
                })
                .collect();
            SparseRow::new(entries, r.rhs)
        })
        .collect();
    ConstraintMatrix::new(cols, sparse)
}
