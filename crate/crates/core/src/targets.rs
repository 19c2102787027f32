//! Locating the compiled row behind a named resource capacity.

use serde::{Deserialize, Serialize};

use crate::equilibrium::ProsumerProblem;
use crate::error::GsaaError;
use crate::model::{ApplianceKind, Behavior, ConstraintOrigin, Prosumer, Scenario};

/// `(prosumer id, row index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintRef {
    pub prosumer: u32,
    pub index: usize,
}

/// A resource capacity selected by meaning rather than by row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Row { index: usize },
    /// EV discharge limit `-q_EV(t) <= h` at a 1-based period.
    EvDischarge { period: usize },
    /// Net-buying row at a 1-based period.
    NetSell { period: usize },
    /// Upper comfort limit of the thermostat-like window ending at a 1-based period.
    AcUpper { period: usize },
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Row { index } => write!(f, "row {index}"),
            Target::EvDischarge { period } => write!(f, "EV discharge t={period}"),
            Target::NetSell { period } => write!(f, "net selling t={period}"),
            Target::AcUpper { period } => write!(f, "AC upper limit t={period}"),
        }
    }
}

fn target_err(prosumer: u32, msg: impl std::fmt::Display) -> GsaaError {
    GsaaError::Target(format!("prosumer {prosumer}: {msg}"))
}

/// Row index of `target` in the prosumer's compiled constraints.
pub fn locate(prosumer: &Prosumer, problem: &ProsumerProblem, target: Target) -> Result<usize, GsaaError> {
    let id = prosumer.id;
    let kind_of = |name: &str| prosumer.appliances.iter().find(|a| a.id == name).map(|a| a.kind);
    match target {
        Target::Row { index } => {
            if index < problem.rows.len() {
                Ok(index)
            } else {
                Err(target_err(id, format!("row {index} out of range ({} rows)", problem.rows.len())))
            }
        }
        Target::EvDischarge { period } => {
            if !prosumer.appliances.iter().any(|a| a.kind == ApplianceKind::Ev) {
                return Err(target_err(id, "no EV appliance"));
            }
            problem
                .rows
                .iter()
                .position(|r| {
                    matches!(&r.origin, ConstraintOrigin::PowerLower { appliance, period: t }
                        if *t == period && kind_of(appliance) == Some(ApplianceKind::Ev))
                })
                .ok_or_else(|| target_err(id, format!("EV has no discharge limit at period {period}")))
        }
        Target::NetSell { period } => {
            if prosumer.behavior != Behavior::NetBuyer {
                return Err(target_err(id, "not a net buyer, so there is no net-selling row"));
            }
            problem
                .rows
                .iter()
                .position(|r| r.origin == ConstraintOrigin::NetBuying { period })
                .ok_or_else(|| target_err(id, format!("no net-buying row at period {period}")))
        }
        Target::AcUpper { period } => {
            if !prosumer.appliances.iter().any(|a| a.kind == ApplianceKind::ThermostatLike) {
                return Err(target_err(id, "no thermostat-like appliance"));
            }
            problem
                .rows
                .iter()
                .position(|r| match &r.origin {
                    ConstraintOrigin::WindowUpper { appliance, window } => {
                        let a = prosumer.appliances.iter().find(|a| &a.id == appliance);
                        a.is_some_and(|a| {
                            a.kind == ApplianceKind::ThermostatLike
                                && a.energy_windows[window - 1].periods.iter().max() == Some(&period)
                        })
                    }
                    _ => false,
                })
                .ok_or_else(|| target_err(id, format!("no upper comfort window ending at period {period}")))
        }
    }
}

/// Resolves `target` for every prosumer where it exists.
pub fn locate_all(scenario: &Scenario, target: Target) -> Vec<(u32, Result<usize, GsaaError>)> {
    scenario
        .prosumers
        .iter()
        .map(|p| {
            let res = ProsumerProblem::build(scenario, p)
                .map_err(GsaaError::from)
                .and_then(|prob| locate(p, &prob, target));
            (p.id, res)
        })
        .collect()
}
