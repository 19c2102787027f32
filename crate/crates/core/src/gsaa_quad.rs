//! Closed-form shadow prices of prosumer resource capacities in the quadratic
//! setting, and the incremental sweep that compares projected welfare gains
//! with realized ones.
//!
//! When only the target row binds among the rows touching its columns, the
//! prosumer's stationarity conditions on those columns involve a single
//! multiplier and can be solved by hand:
//!
//! ```text
//! lambda_j = [ (sum alpha (b_hat - b_0) / (2 a_hat) + h_j) / (sum alpha^2 / (2 a_hat)) ]+
//! ```
//!
//! The assumption is checked against a numeric solve rather than trusted.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{ProsumerObjective, ProsumerProblem};
use crate::error::{GsaaError, ModelError};
use crate::gsaa_convex::{bounds_on_problem, AnchorChoice};
use crate::model::{ApplianceKind, ConstraintOrigin, Prosumer, Scenario, Setting};
use crate::solver::{ConstraintMatrix, SolveOutcome, SolveStatus, SolverOptions};
use crate::targets::{locate, Target};

pub use crate::targets::ConstraintRef;

/// A row counts as binding when its slack is at most this.
pub const SLACK_TOL: f64 = 1e-7;
/// A multiplier counts as positive above this.
pub const DUAL_TOL: f64 = 1e-9;

/// Exact value (quadratic setting) or enclosing interval (convex setting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateValue {
    Exact { value: f64 },
    Interval { lower: f64, upper: f64 },
}

impl EstimateValue {
    pub fn lower(&self) -> f64 {
        match *self {
            EstimateValue::Exact { value } => value,
            EstimateValue::Interval { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            EstimateValue::Exact { value } => value,
            EstimateValue::Interval { upper, .. } => upper,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        match *self {
            EstimateValue::Exact { value } => EstimateValue::Exact { value: k * value },
            EstimateValue::Interval { lower, upper } => EstimateValue::Interval {
                lower: k * lower,
                upper: k * upper,
            },
        }
    }
}

impl std::fmt::Display for EstimateValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateValue::Exact { value } => write!(f, "{value:.6}"),
            EstimateValue::Interval { lower, upper } => write!(f, "[{lower:.6}, {upper:.6}]"),
        }
    }
}

/// Which rows bind at a numeric optimum, relative to one target row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessCheck {
    pub target: usize,
    pub target_slack: f64,
    pub target_dual: f64,
    /// Other binding rows with a positive multiplier.
    pub other_active: Vec<usize>,
    /// The subset of `other_active` sharing a column with the target.
    pub coupled_active: Vec<usize>,
}

impl TightnessCheck {
    /// Target binds and no positively-priced row shares a column with it.
    /// The single-multiplier stationarity argument only needs this much.
    pub fn holds(&self) -> bool {
        self.target_slack <= SLACK_TOL && self.coupled_active.is_empty()
    }

    /// Target binds and every other row is inactive.
    pub fn holds_strict(&self) -> bool {
        self.target_slack <= SLACK_TOL && self.other_active.is_empty()
    }

    pub fn describe(&self) -> String {
        if self.target_slack > SLACK_TOL {
            format!("target row {} is slack by {:.3e}", self.target, self.target_slack)
        } else if !self.coupled_active.is_empty() {
            format!("rows {:?} bind on the target's columns", self.coupled_active)
        } else if !self.other_active.is_empty() {
            format!("rows {:?} bind elsewhere", self.other_active)
        } else {
            "only the target row binds".into()
        }
    }
}

pub fn check_tightness(matrix: &ConstraintMatrix, target: usize, q: &[f64], duals: &[f64]) -> TightnessCheck {
    let slack: Vec<f64> = matrix.residuals(q).iter().map(|r| -r).collect();
    let row = matrix.row(target);
    let other_active: Vec<usize> = (0..matrix.len())
        .filter(|&l| l != target && slack[l] <= SLACK_TOL && duals[l] > DUAL_TOL)
        .collect();
    let coupled_active = other_active
        .iter()
        .copied()
        .filter(|&l| matrix.row(l).shares_support(row))
        .collect();
    TightnessCheck {
        target,
        target_slack: slack[target].max(0.0),
        target_dual: duals[target],
        other_active,
        coupled_active,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowPriceEstimate {
    pub constraint: ConstraintRef,
    pub origin: ConstraintOrigin,
    pub value: EstimateValue,
    /// Closed form before clamping at zero (exact estimates only).
    pub unclamped: Option<f64>,
    pub k_units: f64,
    pub welfare_projection: EstimateValue,
    pub tightness_assumption_held: bool,
    /// Multiplier of the row from a numeric solve.
    pub numeric_dual: Option<f64>,
    pub warnings: Vec<String>,
}

impl ShadowPriceEstimate {
    /// Same estimate with the projection recomputed for `k` relaxed units.
    pub fn with_k(mut self, k: f64) -> Self {
        self.k_units = k;
        self.welfare_projection = self.value.scale(k);
        self
    }
}

/// Closed form on row `j` of a quadratic prosumer problem, before clamping.
pub fn closed_form_multiplier(problem: &ProsumerProblem, j: usize, price: &[f64]) -> Result<f64, GsaaError> {
    let ProsumerObjective::Quadratic { a_hat, b_hat, .. } = &problem.objective else {
        return Err(ModelError::Setting("closed-form shadow prices need the quadratic setting".into()).into());
    };
    let row = problem.matrix.row(j);
    let (mut num, mut den) = (row.rhs, 0.0);
    for &(c, alpha) in &row.entries {
        let b0 = price[problem.columns[c].period - 1];
        num += alpha * (b_hat[c] - b0) / (2.0 * a_hat[c]);
        den += alpha * alpha / (2.0 * a_hat[c]);
    }
    Ok(num / den)
}

pub(crate) fn require_optimal(problem: &ProsumerProblem, out: &SolveOutcome) -> Result<(), GsaaError> {
    match out.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(GsaaError::Infeasible {
            prosumer: problem.prosumer,
            max_violation: problem.matrix.max_violation(&out.primal),
        }),
        SolveStatus::MaxIterations => Err(GsaaError::NotConverged {
            prosumer: problem.prosumer,
            residual: out.kkt.max_residual(),
        }),
    }
}

/// Closed-form estimate on a prepared problem, checked against a numeric solve.
pub fn estimate_on_problem(
    problem: &ProsumerProblem,
    j: usize,
    price: &[f64],
    options: &SolverOptions,
) -> Result<ShadowPriceEstimate, GsaaError> {
    let out = problem.solve(price, options)?;
    require_optimal(problem, &out)?;
    estimate_from_solution(problem, j, price, &out)
}

/// Closed-form estimate checked against an existing optimal solve, so one
/// solve can serve every row of a prosumer.
pub fn estimate_from_solution(
    problem: &ProsumerProblem,
    j: usize,
    price: &[f64],
    out: &SolveOutcome,
) -> Result<ShadowPriceEstimate, GsaaError> {
    let raw = closed_form_multiplier(problem, j, price)?;
    let check = check_tightness(&problem.matrix, j, &out.primal, &out.duals);
    let mut warnings = Vec::new();
    if !check.holds() {
        warnings.push(format!(
            "tightness assumption violated ({}); the closed form is not the multiplier",
            check.describe()
        ));
    }
    let value = EstimateValue::Exact { value: raw.max(0.0) };
    Ok(ShadowPriceEstimate {
        constraint: ConstraintRef {
            prosumer: problem.prosumer,
            index: j,
        },
        origin: problem.rows[j].origin.clone(),
        value,
        unclamped: Some(raw),
        k_units: 1.0,
        welfare_projection: value,
        tightness_assumption_held: check.holds(),
        numeric_dual: Some(out.duals[j]),
        warnings,
    })
}

fn quadratic_problem(scenario: &Scenario, prosumer: u32) -> Result<(&Prosumer, ProsumerProblem), GsaaError> {
    if scenario.setting != Setting::Quadratic {
        return Err(ModelError::Setting("closed-form shadow prices need the quadratic setting".into()).into());
    }
    let p = scenario.prosumer(prosumer)?;
    Ok((p, ProsumerProblem::build(scenario, p)?))
}

pub fn shadow_price_closed_form(scenario: &Scenario, constraint: ConstraintRef) -> Result<ShadowPriceEstimate, GsaaError> {
    shadow_price_for_target(scenario, constraint.prosumer, Target::Row { index: constraint.index })
}

/// Generic closed form on whichever row `target` names.
pub fn shadow_price_for_target(scenario: &Scenario, prosumer: u32, target: Target) -> Result<ShadowPriceEstimate, GsaaError> {
    let (p, problem) = quadratic_problem(scenario, prosumer)?;
    let j = locate(p, &problem, target)?;
    estimate_on_problem(&problem, j, &scenario.utility.cost, &SolverOptions::default())
}

fn replace_value(mut est: ShadowPriceEstimate, raw: f64) -> ShadowPriceEstimate {
    est.unclamped = Some(raw);
    est.value = EstimateValue::Exact { value: raw.max(0.0) };
    est.with_k(1.0)
}

/// Upper comfort limit of the thermostat-like window ending at `period`.
/// `q_bar` overrides the window's energy limit.
pub fn shadow_price_ac(
    scenario: &Scenario,
    prosumer: u32,
    period: usize,
    q_bar: Option<f64>,
) -> Result<ShadowPriceEstimate, GsaaError> {
    let (p, mut problem) = quadratic_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::AcUpper { period })?;
    if let Some(limit) = q_bar {
        problem = problem.relaxed(j, limit - problem.rows[j].rhs);
    }
    let est = estimate_on_problem(&problem, j, &scenario.utility.cost, &SolverOptions::default())?;
    let ProsumerObjective::Quadratic { a_hat, b_hat, .. } = &problem.objective else {
        unreachable!("quadratic setting checked")
    };
    let row = &problem.rows[j];
    let (mut num, mut den) = (0.0, 0.0);
    for term in &row.terms {
        let c = p.column(problem.horizon, p.appliance_index(&term.appliance).expect("compiled"), term.period - 1);
        let b0 = scenario.utility.cost[term.period - 1];
        num += term.coefficient * (b_hat[c] - b0) / a_hat[c];
        den += term.coefficient * term.coefficient / a_hat[c];
    }
    Ok(replace_value(est, (num + 2.0 * row.rhs) / den))
}

/// Net-buying row at `period`: `[sum (b_0 - b_hat) / a_hat / sum 1 / a_hat]+`.
pub fn shadow_price_net_sell(scenario: &Scenario, prosumer: u32, period: usize) -> Result<ShadowPriceEstimate, GsaaError> {
    let (p, problem) = quadratic_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::NetSell { period })?;
    let est = estimate_on_problem(&problem, j, &scenario.utility.cost, &SolverOptions::default())?;
    let b0 = scenario.utility.cost[period - 1];
    let (mut num, mut den) = (0.0, 0.0);
    for a in &p.appliances {
        let u = a.net_utility.as_quadratic().expect("quadratic setting");
        num += (b0 - u.b_hat[period - 1]) / u.a_hat[period - 1];
        den += 1.0 / u.a_hat[period - 1];
    }
    Ok(replace_value(est, num / den))
}

/// EV discharge row `-q_EV(t) <= 0`: `[b_0 - b_hat_EV]+`.
pub fn shadow_price_ev(scenario: &Scenario, prosumer: u32, period: usize) -> Result<ShadowPriceEstimate, GsaaError> {
    let (p, problem) = quadratic_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::EvDischarge { period })?;
    if problem.rows[j].rhs != 0.0 {
        return Err(GsaaError::Target(format!(
            "prosumer {prosumer}: EV discharge limit at period {period} is not zero"
        )));
    }
    let est = estimate_on_problem(&problem, j, &scenario.utility.cost, &SolverOptions::default())?;
    let ev = p
        .appliances
        .iter()
        .find(|a| a.kind == ApplianceKind::Ev && a.lower(period - 1).is_some())
        .expect("located");
    let b_hat = ev.net_utility.as_quadratic().expect("quadratic setting").b_hat[period - 1];
    Ok(replace_value(est, scenario.utility.cost[period - 1] - b_hat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub step: usize,
    /// Capacity `h_j` at which the estimate was taken.
    pub capacity: f64,
    pub estimate_lower: f64,
    pub estimate_upper: f64,
    pub numeric_dual: f64,
    /// `delta` times the upper estimate.
    pub projected_gain: f64,
    pub realized_gain: f64,
    pub cumulative_projected: f64,
    pub cumulative_realized: f64,
    pub tightness_held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub constraint: ConstraintRef,
    pub origin: ConstraintOrigin,
    pub delta: f64,
    pub rows: Vec<SweepRow>,
    /// The sweep stopped because a relaxed problem had no finite optimum.
    pub unbounded: bool,
}

/// Prosumer welfare `U - C - price' q` at the numeric optimum.
fn optimal_welfare(problem: &ProsumerProblem, price: &[f64], options: &SolverOptions) -> Result<(f64, SolveOutcome), GsaaError> {
    let out = problem.solve(price, options)?;
    require_optimal(problem, &out)?;
    let paid: f64 = problem.column_prices(price).iter().zip(&out.primal).map(|(p, q)| p * q).sum();
    Ok((problem.net_utility(&out.primal) - paid, out))
}

/// Relaxes one capacity in `steps` increments of `delta`, comparing the
/// projected gain `delta * estimate` with the realized welfare change.
///
/// Only the owner's welfare changes: prosumers are decoupled at price `b_0`.
pub fn incremental_gsaa_sweep(
    scenario: &Scenario,
    constraint: ConstraintRef,
    delta: f64,
    steps: usize,
) -> Result<SweepTable, GsaaError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(GsaaError::Target(format!("sweep step must be finite and non-negative, got {delta}")));
    }
    let p = scenario.prosumer(constraint.prosumer)?;
    let mut problem = ProsumerProblem::build(scenario, p)?;
    let j = locate(p, &problem, Target::Row { index: constraint.index })?;
    let price = &scenario.utility.cost;
    let options = SolverOptions::default();
    let (mut welfare, _) = optimal_welfare(&problem, price, &options)?;
    let mut table = SweepTable {
        constraint,
        origin: problem.rows[j].origin.clone(),
        delta,
        rows: Vec::with_capacity(steps),
        unbounded: false,
    };
    let (mut cum_proj, mut cum_real) = (0.0, 0.0);
    for step in 0..steps {
        let (lower, upper, numeric, held) = match scenario.setting {
            Setting::Quadratic => {
                let e = estimate_on_problem(&problem, j, price, &options)?;
                (e.value.lower(), e.value.upper(), e.numeric_dual.unwrap_or(f64::NAN), e.tightness_assumption_held)
            }
            Setting::GeneralConvex => {
                let b = bounds_on_problem(&problem, j, price, &AnchorChoice::Zero, &options)?;
                (b.lower, b.upper, b.lambda_numeric, b.tightness_held)
            }
        };
        let capacity = problem.rows[j].rhs;
        let next = problem.relaxed(j, delta);
        let new_welfare = match optimal_welfare(&next, price, &options) {
            Ok((w, _)) => w,
            Err(GsaaError::NotConverged { .. }) | Err(GsaaError::Solver(_)) => {
                table.unbounded = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let projected = delta * upper;
        let realized = new_welfare - welfare;
        cum_proj += projected;
        cum_real += realized;
        table.rows.push(SweepRow {
            step,
            capacity,
            estimate_lower: lower,
            estimate_upper: upper,
            numeric_dual: numeric,
            projected_gain: projected,
            realized_gain: realized,
            cumulative_projected: cum_proj,
            cumulative_realized: cum_real,
            tightness_held: held,
        });
        problem = next;
        welfare = new_welfare;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Appliance, Behavior, EnergyWindow, Horizon, NetUtility, UtilityCompany};
    use crate::scenarios::{paper_sec6, Experiment};

    fn single_ev(b_hat: f64, b0: f64) -> Scenario {
        Scenario {
            horizon: Horizon::new(1).unwrap(),
            setting: Setting::Quadratic,
            utility: UtilityCompany { cost: vec![b0] },
            prosumers: vec![Prosumer {
                id: 1,
                behavior: Behavior::NetSeller,
                appliances: vec![Appliance {
                    id: "EV".into(),
                    kind: ApplianceKind::Ev,
                    q_lower: Some(vec![Some(0.0)]),
                    q_upper: None,
                    energy_windows: vec![],
                    net_utility: NetUtility::quadratic(vec![-0.01], vec![b_hat]),
                }],
                curvature: None,
            }],
        }
    }

    fn ac_scenario(q_bar: f64) -> Scenario {
        Scenario {
            horizon: Horizon::new(3).unwrap(),
            setting: Setting::Quadratic,
            utility: UtilityCompany { cost: vec![0.4, 0.3, 0.5] },
            prosumers: vec![Prosumer {
                id: 4,
                behavior: Behavior::SimpleBuyer,
                appliances: vec![Appliance {
                    id: "AC".into(),
                    kind: ApplianceKind::ThermostatLike,
                    q_lower: Some(vec![Some(0.0); 3]),
                    q_upper: None,
                    energy_windows: vec![EnergyWindow {
                        periods: vec![1, 2, 3],
                        alpha: vec![0.5, 0.8, 1.0],
                        energy_lower: None,
                        energy_upper: Some(q_bar),
                    }],
                    net_utility: NetUtility::quadratic(vec![-0.02, -0.03, -0.025], vec![0.9, 1.1, 1.0]),
                }],
                curvature: None,
            }],
        }
    }

    #[test]
    fn ev_closed_form_matches_numeric_dual() {
        let est = shadow_price_ev(&single_ev(0.1, 0.4), 1, 1).unwrap();
        assert!((est.value.lower() - 0.3).abs() < 1e-15);
        assert!((est.numeric_dual.unwrap() - 0.3).abs() < 1e-8);
        assert!(est.tightness_assumption_held);
        let generic = shadow_price_for_target(&single_ev(0.1, 0.4), 1, Target::EvDischarge { period: 1 }).unwrap();
        assert!((generic.value.lower() - est.value.lower()).abs() < 1e-15);
    }

    #[test]
    fn ev_clamps_when_cost_below_marginal_utility() {
        let est = shadow_price_ev(&single_ev(0.1, 0.05), 1, 1).unwrap();
        assert_eq!(est.value.lower(), 0.0);
        assert!(est.unclamped.unwrap() < 0.0);
        assert!(est.numeric_dual.unwrap().abs() < 1e-9);
        let edge = shadow_price_ev(&single_ev(0.4, 0.4), 1, 1).unwrap();
        assert_eq!(edge.value.lower(), 0.0);
    }

    #[test]
    fn ac_specialization_is_the_generic_form() {
        let s = ac_scenario(10.0);
        let ac = shadow_price_ac(&s, 4, 3, None).unwrap();
        let generic = shadow_price_for_target(&s, 4, Target::AcUpper { period: 3 }).unwrap();
        assert_eq!(ac.unclamped, generic.unclamped);
        assert!(ac.tightness_assumption_held);
        assert!((ac.value.lower() - ac.numeric_dual.unwrap()).abs() < 1e-6);
        assert!(ac.value.lower() > 0.0);
        let hotter = shadow_price_ac(&s, 4, 3, Some(20.0)).unwrap();
        assert!(hotter.value.lower() <= ac.value.lower());
    }

    #[test]
    fn net_sell_single_appliance_reduces_to_ev_form() {
        let mut s = single_ev(0.1, 0.4);
        let ev = &mut s.prosumers[0].appliances[0];
        ev.q_lower = None;
        ev.id = "ES".into();
        ev.kind = ApplianceKind::Storage;
        ev.net_utility = NetUtility::quadratic(vec![-0.01], vec![0.0]);
        let mut second = ev.clone();
        second.id = "EV".into();
        second.kind = ApplianceKind::Ev;
        second.net_utility = NetUtility::quadratic(vec![-1e-6], vec![0.1]);
        s.prosumers[0].appliances.push(second);
        s.prosumers[0].behavior = Behavior::NetBuyer;
        // the flattest appliance dominates
        let est = shadow_price_net_sell(&s, 1, 1).unwrap();
        assert!((est.value.lower() - 0.3).abs() < 1e-4);
        assert!((est.value.lower() - est.numeric_dual.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn net_sell_matches_numeric_dual_on_preset() {
        let s = paper_sec6(Experiment::NetSell);
        for t in [1, 12, 24] {
            for id in [1, 2] {
                let est = shadow_price_net_sell(&s, id, t).unwrap();
                let generic = shadow_price_for_target(&s, id, Target::NetSell { period: t }).unwrap();
                assert_eq!(est.unclamped, generic.unclamped);
                assert!(est.tightness_assumption_held);
                assert!((est.value.lower() - est.numeric_dual.unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn structural_errors() {
        let s = single_ev(0.1, 0.4);
        assert!(matches!(shadow_price_net_sell(&s, 1, 1), Err(GsaaError::Target(_))));
        assert!(matches!(shadow_price_ac(&s, 1, 1, None), Err(GsaaError::Target(_))));
        assert!(shadow_price_ev(&s, 9, 1).is_err());
        assert!(shadow_price_closed_form(&s, ConstraintRef { prosumer: 1, index: 5 }).is_err());
    }

    #[test]
    fn projection_scales_with_k() {
        let est = shadow_price_ev(&single_ev(0.1, 0.4), 1, 1).unwrap().with_k(2.5);
        assert!((est.welfare_projection.lower() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sweep_projection_bounds_realized_gain() {
        let s = single_ev(0.1, 0.4);
        let t = incremental_gsaa_sweep(&s, ConstraintRef { prosumer: 1, index: 0 }, 1.0, 20).unwrap();
        assert_eq!(t.rows.len(), 20);
        for r in &t.rows {
            assert!(r.projected_gain >= r.realized_gain - 1e-8);
            assert!(r.cumulative_projected >= r.cumulative_realized - 1e-8);
        }
        // past the unconstrained optimum (15 units) the row goes slack
        assert_eq!(t.rows[19].estimate_upper, 0.0);
        let zero = incremental_gsaa_sweep(&s, ConstraintRef { prosumer: 1, index: 0 }, 0.0, 3).unwrap();
        assert!(zero.rows.iter().all(|r| r.projected_gain == 0.0 && r.realized_gain.abs() < 1e-12));
    }

    #[test]
    fn sweep_gap_vanishes_with_small_steps() {
        let s = single_ev(0.1, 0.4);
        let c = ConstraintRef { prosumer: 1, index: 0 };
        let gap = |d: f64| {
            let r = &incremental_gsaa_sweep(&s, c, d, 1).unwrap().rows[0];
            (r.projected_gain - r.realized_gain) / d
        };
        assert!(gap(1e-2) < gap(1e-1));
        assert!(gap(1e-3) < 1e-4);
    }
}
