use std::fmt;
use std::sync::Arc;

use super::{Horizon, NetUtility, Prosumer};
use crate::error::ModelError;
use crate::solver::SmoothConvex;

/// One column's contribution to a separable negated net utility:
/// `curvature/2 q^2 + weight ln cosh(q) + slope q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarTerm {
    pub curvature: f64,
    pub weight: f64,
    pub slope: f64,
}

impl ScalarTerm {
    pub fn quadratic(curvature: f64, slope: f64) -> Self {
        ScalarTerm {
            curvature,
            weight: 0.0,
            slope,
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        let mut v = 0.5 * self.curvature * q * q + self.slope * q;
        if self.weight != 0.0 {
            v += self.weight * ln_cosh(q);
        }
        v
    }

    pub fn derivative(&self, q: f64) -> f64 {
        let mut d = self.curvature * q + self.slope;
        if self.weight != 0.0 {
            d += self.weight * q.tanh();
        }
        d
    }
}

fn ln_cosh(q: f64) -> f64 {
    let a = q.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Oracle {
    Separable(Vec<ScalarTerm>),
    Custom {
        value: Arc<ValueFn>,
        gradient: Arc<GradientFn>,
    },
}

/// Negated net utility `F` of a whole prosumer, with declared curvature
/// constants `mu <= L`.
#[derive(Clone)]
pub struct ConvexNetUtility {
    oracle: Oracle,
    dim: usize,
    mu: f64,
    lipschitz: f64,
    grad_at_zero: Vec<f64>,
}

impl fmt::Debug for ConvexNetUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexNetUtility")
            .field("dim", &self.dim)
            .field("mu", &self.mu)
            .field("lipschitz", &self.lipschitz)
            .field("separable", &matches!(self.oracle, Oracle::Separable(_)))
            .finish()
    }
}

fn check_constants(mu: f64, lipschitz: f64) -> Result<(), ModelError> {
    if mu > 0.0 && mu <= lipschitz && lipschitz.is_finite() {
        Ok(())
    } else {
        Err(ModelError::CurvatureBounds(format!(
            "need 0 < mu <= lipschitz, got mu={mu} lipschitz={lipschitz}"
        )))
    }
}

impl ConvexNetUtility {
    pub fn separable(terms: Vec<ScalarTerm>, mu: f64, lipschitz: f64) -> Result<Self, ModelError> {
        check_constants(mu, lipschitz)?;
        let grad_at_zero = terms.iter().map(|t| t.derivative(0.0)).collect();
        Ok(ConvexNetUtility {
            dim: terms.len(),
            oracle: Oracle::Separable(terms),
            mu,
            lipschitz,
            grad_at_zero,
        })
    }

    /// Wraps arbitrary value and gradient closures.
    pub fn custom(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        mu: f64,
        lipschitz: f64,
    ) -> Result<Self, ModelError> {
        check_constants(mu, lipschitz)?;
        let mut grad_at_zero = vec![0.0; dim];
        gradient(&vec![0.0; dim], &mut grad_at_zero);
        Ok(ConvexNetUtility {
            oracle: Oracle::Custom {
                value: Arc::new(value),
                gradient: Arc::new(gradient),
            },
            dim,
            mu,
            lipschitz,
            grad_at_zero,
        })
    }

    /// Builds the separable oracle over the prosumer's columns. Declared
    /// curvature bounds are used when present, otherwise the tightest range
    /// implied by the appliance utilities.
    pub fn for_prosumer(prosumer: &Prosumer, horizon: Horizon) -> Result<Self, ModelError> {
        let h = horizon.periods();
        let mut terms = Vec::with_capacity(prosumer.columns(horizon));
        for a in &prosumer.appliances {
            for t in 0..h {
                terms.push(match &a.net_utility {
                    NetUtility::Quadratic(q) => ScalarTerm::quadratic(-2.0 * q.a_hat[t], -q.b_hat[t]),
                    NetUtility::LogCosh(l) => ScalarTerm {
                        curvature: l.curvature[t],
                        weight: l.weight[t],
                        slope: -l.b_hat[t],
                    },
                });
            }
        }
        let bounds = prosumer.curvature.unwrap_or_else(|| prosumer.implied_curvature(horizon));
        Self::separable(terms, bounds.mu, bounds.lipschitz)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn grad_at_zero(&self) -> &[f64] {
        &self.grad_at_zero
    }

    pub fn terms(&self) -> Option<&[ScalarTerm]> {
        match &self.oracle {
            Oracle::Separable(t) => Some(t),
            Oracle::Custom { .. } => None,
        }
    }
}

impl SmoothConvex for ConvexNetUtility {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64]) -> f64 {
        match &self.oracle {
            Oracle::Separable(terms) => terms.iter().zip(q).map(|(t, &x)| t.value(x)).sum(),
            Oracle::Custom { value, .. } => value(q),
        }
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        match &self.oracle {
            Oracle::Separable(terms) => {
                for ((o, t), &x) in out.iter_mut().zip(terms).zip(q) {
                    *o = t.derivative(x);
                }
            }
            Oracle::Custom { gradient, .. } => gradient(q, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_is_stable_and_smooth() {
        assert!((ln_cosh(0.0)).abs() < 1e-15);
        assert!((ln_cosh(1.0) - 1.0f64.cosh().ln()).abs() < 1e-14);
        assert!((ln_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        let t = ScalarTerm {
            curvature: 0.5,
            weight: 0.3,
            slope: -0.2,
        };
        for &x in &[-3.0, -0.4, 0.0, 0.7, 5.0] {
            let h = 1e-6;
            let fd = (t.value(x + h) - t.value(x - h)) / (2.0 * h);
            assert!((fd - t.derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(ConvexNetUtility::separable(vec![], 0.0, 1.0).is_err());
        assert!(ConvexNetUtility::separable(vec![], 2.0, 1.0).is_err());
    }
}
