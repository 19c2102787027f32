//! Domain types for the multi-period demand-response market.
//!
//! A [`Scenario`] is the serde-facing description of one market: a horizon,
//! a utility company with linear per-period cost, and a list of prosumers
//! owning appliances. Appliance requirements (power bounds, energy windows)
//! and prosumer behaviour are compiled into rows of the form
//! `sum(alpha * q) <= h` by [`compile_constraints`].
//!
//! Periods are 1-based in every public, serialized or displayed place and
//! 0-based inside vectors.

mod coefficients;
mod constraints;
mod convex;

pub use coefficients::{validate_coefficients, Coefficient, CoefficientReport, CoefficientViolation};
pub(crate) use constraints::to_matrix as constraint_matrix;
pub use constraints::{compile_constraints, ConstraintOrigin, GeneralLinearConstraint, Term};
pub use convex::{ConvexNetUtility, ScalarTerm};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::solver::feasibility::{find_feasible_point, Feasibility};

/// Number of market periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Horizon(usize);

impl Horizon {
    pub fn new(periods: usize) -> Result<Self, ModelError> {
        if periods == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        Ok(Horizon(periods))
    }

    pub fn periods(self) -> usize {
        self.0
    }

    /// Iterator over 1-based period labels.
    pub fn labels(self) -> impl Iterator<Item = usize> {
        1..=self.0
    }
}

impl TryFrom<usize> for Horizon {
    type Error = ModelError;
    fn try_from(value: usize) -> Result<Self, Self::Error> {
        Horizon::new(value)
    }
}

impl From<Horizon> for usize {
    fn from(h: Horizon) -> usize {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceKind {
    Inflexible,
    /// AC, washer, dryer, dishwasher, fridge.
    ThermostatLike,
    Ev,
    Storage,
}

/// Per-period `a x^2 + b x + c` net utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticNetUtility {
    pub a_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    /// Constant terms; omitted means all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<Vec<f64>>,
}

impl QuadraticNetUtility {
    pub fn constant(&self, period: usize) -> f64 {
        self.c_hat.as_ref().map_or(0.0, |c| c[period])
    }
}

/// Non-quadratic smooth net utility, only meaningful in the convex setting.
///
/// The negated utility per period is
/// `curvature/2 * q^2 + weight * ln cosh(q) - b_hat * q`, whose second
/// derivative lies in `[curvature, curvature + weight]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogCoshNetUtility {
    pub curvature: Vec<f64>,
    pub weight: Vec<f64>,
    pub b_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum NetUtility {
    Quadratic(QuadraticNetUtility),
    LogCosh(LogCoshNetUtility),
}

impl NetUtility {
    pub fn quadratic(a_hat: Vec<f64>, b_hat: Vec<f64>) -> Self {
        NetUtility::Quadratic(QuadraticNetUtility {
            a_hat,
            b_hat,
            c_hat: None,
        })
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticNetUtility> {
        match self {
            NetUtility::Quadratic(q) => Some(q),
            NetUtility::LogCosh(_) => None,
        }
    }

    /// Bounds on the second derivative of the negated utility at `period`.
    pub fn curvature_range(&self, period: usize) -> (f64, f64) {
        match self {
            NetUtility::Quadratic(q) => {
                let c = -2.0 * q.a_hat[period];
                (c, c)
            }
            NetUtility::LogCosh(l) => (l.curvature[period], l.curvature[period] + l.weight[period]),
        }
    }

    fn lengths(&self) -> Vec<(&'static str, usize)> {
        match self {
            NetUtility::Quadratic(q) => {
                let mut v = vec![("a_hat", q.a_hat.len()), ("b_hat", q.b_hat.len())];
                if let Some(c) = &q.c_hat {
                    v.push(("c_hat", c.len()));
                }
                v
            }
            NetUtility::LogCosh(l) => vec![
                ("curvature", l.curvature.len()),
                ("weight", l.weight.len()),
                ("b_hat", l.b_hat.len()),
            ],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            NetUtility::Quadratic(q) => q
                .a_hat
                .iter()
                .chain(&q.b_hat)
                .chain(q.c_hat.iter().flatten())
                .copied()
                .collect(),
            NetUtility::LogCosh(l) => l.curvature.iter().chain(&l.weight).chain(&l.b_hat).copied().collect(),
        }
    }
}

/// `energy_lower <= sum_{t in periods} alpha(t) q(t) <= energy_upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWindow {
    /// 1-based periods.
    pub periods: Vec<usize>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub energy_lower: Option<f64>,
    #[serde(default)]
    pub energy_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Appliance {
    pub id: String,
    pub kind: ApplianceKind,
    /// Per-period lower power bound; `null` entries (or an absent array) mean unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lower: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_upper: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energy_windows: Vec<EnergyWindow>,
    pub net_utility: NetUtility,
}

impl Appliance {
    pub fn lower(&self, period: usize) -> Option<f64> {
        self.q_lower.as_ref().and_then(|v| v[period])
    }

    pub fn upper(&self, period: usize) -> Option<f64> {
        self.q_upper.as_ref().and_then(|v| v[period])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    SimpleBuyer,
    /// Adds `sum_a q_a(t) >= 0` for every period.
    NetBuyer,
    NetSeller,
}

/// Strong-convexity modulus and gradient Lipschitz constant of a prosumer's
/// negated net utility. Only used in the convex setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureBounds {
    pub mu: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prosumer {
    pub id: u32,
    pub behavior: Behavior,
    pub appliances: Vec<Appliance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<CurvatureBounds>,
}

impl Prosumer {
    pub fn columns(&self, horizon: Horizon) -> usize {
        self.appliances.len() * horizon.periods()
    }

    /// Column of appliance `index` at 0-based `period`.
    pub fn column(&self, horizon: Horizon, index: usize, period: usize) -> usize {
        index * horizon.periods() + period
    }

    pub fn appliance_index(&self, id: &str) -> Option<usize> {
        self.appliances.iter().position(|a| a.id == id)
    }

    /// Tightest curvature range implied by the appliance utilities.
    pub fn implied_curvature(&self, horizon: Horizon) -> CurvatureBounds {
        let mut mu = f64::INFINITY;
        let mut l = 0.0f64;
        for a in &self.appliances {
            for t in 0..horizon.periods() {
                let (lo, hi) = a.net_utility.curvature_range(t);
                mu = mu.min(lo);
                l = l.max(hi);
            }
        }
        CurvatureBounds { mu, lipschitz: l }
    }

    /// Searches for a point satisfying every compiled row.
    pub fn feasibility_probe(&self, horizon: Horizon) -> Result<Feasibility, ModelError> {
        let rows = compile_constraints(self, horizon)?;
        let matrix = constraints::to_matrix(self, horizon, &rows);
        Ok(find_feasible_point(&matrix))
    }
}

/// Free-function form of [`Prosumer::feasibility_probe`].
pub fn feasibility_probe(prosumer: &Prosumer, horizon: Horizon) -> Result<Feasibility, ModelError> {
    prosumer.feasibility_probe(horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityCompany {
    /// Marginal production cost `b_0(t)`.
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Quadratic,
    GeneralConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: Horizon,
    pub setting: Setting,
    pub utility: UtilityCompany,
    pub prosumers: Vec<Prosumer>,
}

impl Scenario {
    /// Parses and validates a JSON scenario.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn prosumer(&self, id: u32) -> Result<&Prosumer, ModelError> {
        self.prosumers.iter().find(|p| p.id == id).ok_or(ModelError::UnknownProsumer(id))
    }

    pub fn prosumer_index(&self, id: u32) -> Result<usize, ModelError> {
        self.prosumers.iter().position(|p| p.id == id).ok_or(ModelError::UnknownProsumer(id))
    }

    /// Checks every structural invariant. Called by [`Scenario::from_json`];
    /// programmatic builders should call it too.
    pub fn validate(&self) -> Result<(), ModelError> {
        let h = self.horizon.periods();
        check_len("utility.cost", h, self.utility.cost.len())?;
        for (t, &c) in self.utility.cost.iter().enumerate() {
            if !c.is_finite() {
                return Err(ModelError::NonFinite {
                    context: format!("utility.cost[{}]", t + 1),
                });
            }
            if c < 0.0 {
                return Err(ModelError::NegativeCost { period: t + 1, value: c });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.prosumers {
            if !seen.insert(p.id) {
                return Err(ModelError::DuplicateProsumer(p.id));
            }
            self.validate_prosumer(p)?;
        }
        Ok(())
    }

    fn validate_prosumer(&self, p: &Prosumer) -> Result<(), ModelError> {
        let h = self.horizon.periods();
        let mut ids = std::collections::BTreeSet::new();
        for a in &p.appliances {
            if !ids.insert(a.id.as_str()) {
                return Err(ModelError::DuplicateAppliance {
                    prosumer: p.id,
                    appliance: a.id.clone(),
                });
            }
            let ctx = format!("prosumer {} appliance {}", p.id, a.id);
            for (name, len) in a.net_utility.lengths() {
                check_len(&format!("{ctx} net_utility.{name}"), h, len)?;
            }
            if a.net_utility.values().iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite {
                    context: format!("{ctx} net_utility"),
                });
            }
            if let Some(v) = &a.q_lower {
                check_len(&format!("{ctx} q_lower"), h, v.len())?;
            }
            if let Some(v) = &a.q_upper {
                check_len(&format!("{ctx} q_upper"), h, v.len())?;
            }
            for t in 0..h {
                if let (Some(lo), Some(hi)) = (a.lower(t), a.upper(t)) {
                    if lo > hi {
                        return Err(ModelError::InvertedBounds {
                            context: format!("{ctx} period {}", t + 1),
                            lower: lo,
                            upper: hi,
                        });
                    }
                }
                if p.behavior == Behavior::SimpleBuyer && a.lower(t).is_none_or(|lo| lo < 0.0) {
                    return Err(ModelError::SimpleBuyerDischarge {
                        prosumer: p.id,
                        appliance: a.id.clone(),
                        period: t + 1,
                    });
                }
            }
            if a.kind == ApplianceKind::Inflexible && !a.energy_windows.is_empty() {
                return Err(ModelError::InflexibleWindow(a.id.clone()));
            }
            for (w, win) in a.energy_windows.iter().enumerate() {
                if let (Some(lo), Some(hi)) = (win.energy_lower, win.energy_upper) {
                    if lo > hi {
                        return Err(ModelError::InvertedBounds {
                            context: format!("{ctx} window {}", w + 1),
                            lower: lo,
                            upper: hi,
                        });
                    }
                }
            }
            match (&a.net_utility, self.setting) {
                (NetUtility::LogCosh(_), Setting::Quadratic) => {
                    return Err(ModelError::Setting(format!(
                        "{ctx}: the quadratic setting needs a quadratic net utility"
                    )))
                }
                _ => {
                    let report = validate_coefficients(a);
                    if !report.is_valid() {
                        return Err(ModelError::Coefficients(format!("{ctx}: {report}")));
                    }
                }
            }
        }
        // compiling catches window structure problems and degenerate rows
        compile_constraints(p, self.horizon)?;
        if self.setting == Setting::GeneralConvex {
            self.validate_convex(p)?;
        }
        Ok(())
    }

    fn validate_convex(&self, p: &Prosumer) -> Result<(), ModelError> {
        let bounds = p.curvature.ok_or_else(|| {
            ModelError::Setting(format!("prosumer {}: the convex setting needs curvature bounds", p.id))
        })?;
        if !(bounds.mu > 0.0 && bounds.mu <= bounds.lipschitz && bounds.lipschitz.is_finite()) {
            return Err(ModelError::CurvatureBounds(format!(
                "prosumer {}: need 0 < mu <= lipschitz, got mu={} lipschitz={}",
                p.id, bounds.mu, bounds.lipschitz
            )));
        }
        let implied = p.implied_curvature(self.horizon);
        let slack = 1e-12 * implied.lipschitz.max(1.0);
        if bounds.mu > implied.mu + slack || bounds.lipschitz < implied.lipschitz - slack {
            return Err(ModelError::CurvatureBounds(format!(
                "prosumer {}: declared [{}, {}] does not contain the utility curvature range [{}, {}]",
                p.id, bounds.mu, bounds.lipschitz, implied.mu, implied.lipschitz
            )));
        }
        let oracle = ConvexNetUtility::for_prosumer(p, self.horizon)?;
        if let Some(c) = oracle.grad_at_zero().iter().position(|g| *g >= 0.0) {
            return Err(ModelError::Setting(format!(
                "prosumer {}: marginal utility at zero must be positive (column {c})",
                p.id
            )));
        }
        Ok(())
    }
}

fn check_len(field: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::LengthMismatch {
            field: field.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Failure to load a scenario file.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] ModelError),
}
