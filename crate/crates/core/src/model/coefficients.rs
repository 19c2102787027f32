use std::fmt;

use serde::Serialize;

use super::{Appliance, ApplianceKind, NetUtility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    A,
    B,
    C,
    Curvature,
    Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientViolation {
    pub appliance: String,
    /// 1-based.
    pub period: usize,
    pub coefficient: Coefficient,
    pub value: f64,
    pub requirement: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub violations: Vec<CoefficientViolation>,
}

impl CoefficientReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CoefficientReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(
                f,
                "{} t={} {:?}={} (needs {})",
                v.appliance, v.period, v.coefficient, v.value, v.requirement
            )?;
        }
        Ok(())
    }
}

/// Sign rules per appliance kind.
///
/// Quadratic: `a < 0` always; `b > 0` except storage where `b = 0`;
/// `c = 0` except thermostat-like loads where it is free.
/// Log-cosh: positive curvature, non-negative weight, same rule for `b`.
pub fn validate_coefficients(appliance: &Appliance) -> CoefficientReport {
    let mut report = CoefficientReport::default();
    let mut push = |period: usize, coefficient, value: f64, requirement| {
        report.violations.push(CoefficientViolation {
            appliance: appliance.id.clone(),
            period: period + 1,
            coefficient,
            value,
            requirement,
        })
    };
    let storage = appliance.kind == ApplianceKind::Storage;
    let check_b = |t: usize, b: f64, push: &mut dyn FnMut(usize, Coefficient, f64, &'static str)| {
        if storage {
            if b != 0.0 {
                push(t, Coefficient::B, b, "= 0");
            }
        } else if !(b > 0.0) {
            push(t, Coefficient::B, b, "> 0");
        }
    };
    match &appliance.net_utility {
        NetUtility::Quadratic(q) => {
            for (t, &a) in q.a_hat.iter().enumerate() {
                if !(a < 0.0) {
                    push(t, Coefficient::A, a, "< 0");
                }
            }
            for (t, &b) in q.b_hat.iter().enumerate() {
                check_b(t, b, &mut push);
            }
            if appliance.kind != ApplianceKind::ThermostatLike {
                for (t, &c) in q.c_hat.iter().flatten().enumerate() {
                    if c != 0.0 {
                        push(t, Coefficient::C, c, "= 0");
                    }
                }
            }
        }
        NetUtility::LogCosh(l) => {
            for (t, &c) in l.curvature.iter().enumerate() {
                if !(c > 0.0) {
                    push(t, Coefficient::Curvature, c, "> 0");
                }
            }
            for (t, &w) in l.weight.iter().enumerate() {
                if !(w >= 0.0) {
                    push(t, Coefficient::Weight, w, ">= 0");
                }
            }
            for (t, &b) in l.b_hat.iter().enumerate() {
                check_b(t, b, &mut push);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadraticNetUtility;

    fn appliance(kind: ApplianceKind, a: f64, b: f64, c: f64) -> Appliance {
        Appliance {
            id: "x".into(),
            kind,
            q_lower: None,
            q_upper: None,
            energy_windows: vec![],
            net_utility: NetUtility::Quadratic(QuadraticNetUtility {
                a_hat: vec![a],
                b_hat: vec![b],
                c_hat: Some(vec![c]),
            }),
        }
    }

    #[test]
    fn table_rows_accepted() {
        assert!(validate_coefficients(&appliance(ApplianceKind::Ev, -0.01, 0.1, 0.0)).is_valid());
        assert!(validate_coefficients(&appliance(ApplianceKind::Inflexible, -0.2, 0.5, 0.0)).is_valid());
        assert!(validate_coefficients(&appliance(ApplianceKind::ThermostatLike, -0.2, 0.5, -3.0)).is_valid());
        assert!(validate_coefficients(&appliance(ApplianceKind::ThermostatLike, -0.2, 0.5, 3.0)).is_valid());
        assert!(validate_coefficients(&appliance(ApplianceKind::Storage, -0.02, 0.0, 0.0)).is_valid());
    }

    #[test]
    fn storage_with_linear_term_rejected() {
        let r = validate_coefficients(&appliance(ApplianceKind::Storage, -0.02, 0.1, 0.0));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].coefficient, Coefficient::B);
        assert_eq!(r.violations[0].period, 1);
    }

    #[test]
    fn zero_curvature_rejected_for_every_kind() {
        for kind in [
            ApplianceKind::Inflexible,
            ApplianceKind::ThermostatLike,
            ApplianceKind::Ev,
            ApplianceKind::Storage,
        ] {
            let b = if kind == ApplianceKind::Storage { 0.0 } else { 0.1 };
            let r = validate_coefficients(&appliance(kind, 0.0, b, 0.0));
            assert!(r.violations.iter().any(|v| v.coefficient == Coefficient::A), "{kind:?}");
        }
    }

    #[test]
    fn single_sign_flips_rejected() {
        let cases = [
            (ApplianceKind::Ev, 0.01, 0.1, 0.0),
            (ApplianceKind::Ev, -0.01, -0.1, 0.0),
            (ApplianceKind::Ev, -0.01, 0.1, 1.0),
            (ApplianceKind::Inflexible, -0.01, 0.1, -1.0),
            (ApplianceKind::ThermostatLike, -0.01, -0.1, 0.0),
            (ApplianceKind::Storage, 0.02, 0.0, 0.0),
            (ApplianceKind::Storage, -0.02, 0.0, 1.0),
        ];
        for (kind, a, b, c) in cases {
            assert!(!validate_coefficients(&appliance(kind, a, b, c)).is_valid(), "{kind:?} {a} {b} {c}");
        }
    }
}
