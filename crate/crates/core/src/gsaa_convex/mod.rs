//! Dual bounds on shadow prices when net utilities are only known to be
//! `mu`-strongly concave with `L`-Lipschitz gradients.
//!
//! Around anchors `r_lower` and `r_upper` the objective `F` is replaced by
//! the quadratics
//!
//! ```text
//! F(r) + grad F(r)'(q - r) + c/2 |q - r|^2,   c in {mu, L}
//! ```
//!
//! whose multipliers have closed forms. The true multiplier lies within a
//! distance `H_1` (resp. `H_3`) of them, with constants built from the norms
//! of the three optimizers and the anchors.

mod case_study;

pub use case_study::{
    beta_case_study, bhat_scan, bounds_vs_discharge, classify_region, region_functions, region_grid, BetaComparison,
    BhatScanRow, DischargeBoundsRow, Region, RegionParams, RegionPoint, RegionValues,
};

use serde::{Deserialize, Serialize};

use crate::equilibrium::{ProsumerObjective, ProsumerProblem};
use crate::error::{GsaaError, ModelError};
use crate::gsaa_quad::{check_tightness, require_optimal, ConstraintRef, EstimateValue, ShadowPriceEstimate, TightnessCheck};
use crate::model::{ConstraintOrigin, ConvexNetUtility, Scenario, Setting};
use crate::solver::{solve_qp_dual, QpProblem, SmoothConvex, SolverOptions};
use crate::targets::{locate, Target};

/// Expansion points of the lower and upper surrogate problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateAnchors {
    pub r_lower: Vec<f64>,
    pub r_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnchorChoice {
    Zero,
    /// Both anchors at the prosumer's own optimum; the three problems then
    /// share it and the simplified constants apply.
    OperatingPoint,
    Custom(SurrogateAnchors),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBounds {
    pub constraint: ConstraintRef,
    pub origin: ConstraintOrigin,
    pub lower: f64,
    pub upper: f64,
    /// Closed-form multiplier of the `mu` surrogate.
    pub lambda_lower: f64,
    /// Closed-form multiplier of the `L` surrogate.
    pub lambda_upper: f64,
    pub lambda_numeric: f64,
    pub lambda_lower_numeric: f64,
    pub lambda_upper_numeric: f64,
    pub h1: f64,
    pub h3: f64,
    pub eta: f64,
    pub mu: f64,
    pub lipschitz: f64,
    pub norm_q_lower: f64,
    pub norm_q: f64,
    pub norm_q_upper: f64,
    pub norm_r_lower: f64,
    pub norm_r_upper: f64,
    /// Constants use the anchors-at-optimum form.
    pub operating_point_form: bool,
    /// In all three problems the target binds and no positively-priced row
    /// shares a column with it.
    pub tightness_held: bool,
    /// In all three problems the target is the only binding row.
    pub tightness_strict: bool,
    /// In some problem another positively-priced row shares a column with
    /// the target (a slack target alone does not set this).
    pub coupled_rows_bind: bool,
    pub warnings: Vec<String>,
}

impl DualBounds {
    pub fn contains(&self, lambda: f64, slack: f64) -> bool {
        self.lower <= lambda + slack && lambda <= self.upper + slack
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// The interval as a shadow-price estimate for `k` relaxed units.
    pub fn to_estimate(&self, k: f64) -> ShadowPriceEstimate {
        ShadowPriceEstimate {
            constraint: self.constraint,
            origin: self.origin.clone(),
            value: EstimateValue::Interval {
                lower: self.lower,
                upper: self.upper,
            },
            unclamped: None,
            k_units: 1.0,
            welfare_projection: EstimateValue::Interval {
                lower: self.lower,
                upper: self.upper,
            },
            tightness_assumption_held: self.tightness_held,
            numeric_dual: Some(self.lambda_numeric),
            warnings: self.warnings.clone(),
        }
        .with_k(k)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `max{lam_lo - h1, lam_hi - h3, 0}` and `min{lam_lo + h1, lam_hi + h3}`.
pub fn sandwich(lambda_lower: f64, h1: f64, lambda_upper: f64, h3: f64) -> (f64, f64) {
    (
        (lambda_lower - h1).max(lambda_upper - h3).max(0.0),
        (lambda_lower + h1).min(lambda_upper + h3),
    )
}

/// Inputs of the zero-anchor forms on one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroAnchorInputs {
    pub eta: f64,
    /// `sum alpha (-dF/dq(0) - b_0)` over the row.
    pub initial_rate_sum: f64,
    pub rhs: f64,
    pub mu: f64,
    pub lipschitz: f64,
    pub norm_q_lower: f64,
    pub norm_q: f64,
    pub norm_q_upper: f64,
}

/// Bounds with both anchors at zero.
pub fn zero_anchor_bounds(i: &ZeroAnchorInputs) -> (f64, f64) {
    let se = i.eta.sqrt();
    let lam_lo = i.eta * (i.initial_rate_sum - i.mu * i.rhs).max(0.0);
    let lam_hi = i.eta * (i.initial_rate_sum - i.lipschitz * i.rhs).max(0.0);
    let h1 = se * (i.mu * i.norm_q_lower + i.lipschitz * i.norm_q);
    let h3 = se * i.lipschitz * (i.norm_q_upper + i.norm_q);
    sandwich(lam_lo, h1, lam_hi, h3)
}

/// Zero anchors and zero capacity: both surrogate multipliers coincide and
/// `mu |q_lower| = L |q_upper|` merges the two constants.
pub fn zero_anchor_zero_rhs_bounds(eta: f64, initial_rate_sum: f64, lipschitz: f64, norm_q_upper: f64, norm_q: f64) -> (f64, f64) {
    let center = eta * initial_rate_sum.max(0.0);
    let spread = eta.sqrt() * lipschitz * (norm_q_upper + norm_q);
    ((center - spread).max(0.0), center + spread)
}

/// EV discharge row `-q <= 0`.
pub fn ev_bounds_formula(b0: f64, grad_at_zero: f64, lipschitz: f64, norm_q_upper: f64, norm_q: f64) -> (f64, f64) {
    let center = (b0 + grad_at_zero).max(0.0);
    let spread = lipschitz * (norm_q_upper + norm_q);
    ((center - spread).max(0.0), center + spread)
}

/// Net-buying row `-sum_a q_a <= 0` over `grads_at_zero.len()` appliances.
pub fn net_sell_bounds_formula(b0: f64, grads_at_zero: &[f64], lipschitz: f64, norm_q_upper: f64, norm_q: f64) -> (f64, f64) {
    let n = grads_at_zero.len() as f64;
    let center = grads_at_zero.iter().map(|g| b0 + g).sum::<f64>().max(0.0) / n;
    let spread = lipschitz * (norm_q_upper + norm_q) / n.sqrt();
    ((center - spread).max(0.0), center + spread)
}

/// The three solves for one prosumer and anchor choice, shared by all rows.
#[derive(Debug, Clone)]
pub struct BoundsContext {
    utility: ConvexNetUtility,
    price: Vec<f64>,
    r_lower: Vec<f64>,
    r_upper: Vec<f64>,
    grad_r_lower: Vec<f64>,
    grad_r_upper: Vec<f64>,
    q: Vec<f64>,
    duals: Vec<f64>,
    q_lower: Vec<f64>,
    duals_lower: Vec<f64>,
    q_upper: Vec<f64>,
    duals_upper: Vec<f64>,
    operating_point: bool,
}

impl BoundsContext {
    pub fn new(
        problem: &ProsumerProblem,
        price: &[f64],
        anchors: &AnchorChoice,
        options: &SolverOptions,
    ) -> Result<Self, GsaaError> {
        let ProsumerObjective::Convex(f) = &problem.objective else {
            return Err(ModelError::Setting("dual bounds need the general convex setting".into()).into());
        };
        let n = problem.dim();
        let out = problem.solve(price, options)?;
        require_optimal(problem, &out)?;
        let (r_lower, r_upper) = match anchors {
            AnchorChoice::Zero => (vec![0.0; n], vec![0.0; n]),
            AnchorChoice::OperatingPoint => (out.primal.clone(), out.primal.clone()),
            AnchorChoice::Custom(a) => {
                if a.r_lower.len() != n || a.r_upper.len() != n {
                    return Err(GsaaError::Target(format!(
                        "prosumer {}: anchors need {n} entries",
                        problem.prosumer
                    )));
                }
                if a.r_lower.iter().chain(&a.r_upper).any(|v| !v.is_finite()) {
                    return Err(GsaaError::Target("anchors must be finite".into()));
                }
                (a.r_lower.clone(), a.r_upper.clone())
            }
        };
        let p = problem.column_prices(price);
        let surrogate = |c: f64, r: &[f64], g: &[f64]| -> Result<(Vec<f64>, Vec<f64>), GsaaError> {
            let qp = QpProblem::new(
                vec![-c; n],
                (0..n).map(|i| -(g[i] + p[i] - c * r[i])).collect(),
                problem.matrix.clone(),
            );
            let s = solve_qp_dual(&qp, options)?;
            require_optimal(problem, &s)?;
            Ok((s.primal, s.duals))
        };
        let grad_r_lower = f.gradient_vec(&r_lower);
        let grad_r_upper = f.gradient_vec(&r_upper);
        let (q_lower, duals_lower) = surrogate(f.mu(), &r_lower, &grad_r_lower)?;
        let (q_upper, duals_upper) = surrogate(f.lipschitz(), &r_upper, &grad_r_upper)?;
        Ok(BoundsContext {
            utility: f.clone(),
            price: p,
            r_lower,
            r_upper,
            grad_r_lower,
            grad_r_upper,
            q: out.primal,
            duals: out.duals,
            q_lower,
            duals_lower,
            q_upper,
            duals_upper,
            operating_point: matches!(anchors, AnchorChoice::OperatingPoint),
        })
    }

    pub fn optimum(&self) -> &[f64] {
        &self.q
    }

    pub fn lower_optimum(&self) -> &[f64] {
        &self.q_lower
    }

    pub fn upper_optimum(&self) -> &[f64] {
        &self.q_upper
    }

    /// Tightness of row `j` in the lower, middle and upper problems.
    pub fn tightness(&self, problem: &ProsumerProblem, j: usize) -> [TightnessCheck; 3] {
        [
            check_tightness(&problem.matrix, j, &self.q_lower, &self.duals_lower),
            check_tightness(&problem.matrix, j, &self.q, &self.duals),
            check_tightness(&problem.matrix, j, &self.q_upper, &self.duals_upper),
        ]
    }

    pub fn bounds(&self, problem: &ProsumerProblem, j: usize) -> DualBounds {
        let (mu, l) = (self.utility.mu(), self.utility.lipschitz());
        let row = problem.matrix.row(j);
        let (mut sum_lo, mut sum_hi, mut sq) = (0.0, 0.0, 0.0);
        for &(c, alpha) in &row.entries {
            sum_lo += alpha * (mu * self.r_lower[c] - self.grad_r_lower[c] - self.price[c]);
            sum_hi += alpha * (l * self.r_upper[c] - self.grad_r_upper[c] - self.price[c]);
            sq += alpha * alpha;
        }
        let eta = 1.0 / sq;
        let lambda_lower = eta * (sum_lo - mu * row.rhs).max(0.0);
        let lambda_upper = eta * (sum_hi - l * row.rhs).max(0.0);
        let (nql, nq, nqu) = (norm(&self.q_lower), norm(&self.q), norm(&self.q_upper));
        let (nrl, nru) = (norm(&self.r_lower), norm(&self.r_upper));
        let se = eta.sqrt();
        let (h1, h3) = if self.operating_point {
            (se * (l + mu) * (nq + nrl), 2.0 * se * l * (nq + nru))
        } else {
            (
                se * (mu * nql + l * nq + (mu + l) * nrl),
                se * l * (nqu + nq + 2.0 * nru),
            )
        };
        let (lower, upper) = sandwich(lambda_lower, h1, lambda_upper, h3);
        let checks = self.tightness(problem, j);
        let mut warnings = Vec::new();
        for (name, c) in ["lower surrogate", "own problem", "upper surrogate"].iter().zip(&checks) {
            if !c.holds() {
                warnings.push(format!("{name}: {}", c.describe()));
            }
        }
        DualBounds {
            constraint: ConstraintRef {
                prosumer: problem.prosumer,
                index: j,
            },
            origin: problem.rows[j].origin.clone(),
            lower,
            upper,
            lambda_lower,
            lambda_upper,
            lambda_numeric: self.duals[j],
            lambda_lower_numeric: self.duals_lower[j],
            lambda_upper_numeric: self.duals_upper[j],
            h1,
            h3,
            eta,
            mu,
            lipschitz: l,
            norm_q_lower: nql,
            norm_q: nq,
            norm_q_upper: nqu,
            norm_r_lower: nrl,
            norm_r_upper: nru,
            operating_point_form: self.operating_point,
            tightness_held: checks.iter().all(TightnessCheck::holds),
            tightness_strict: checks.iter().all(TightnessCheck::holds_strict),
            coupled_rows_bind: checks.iter().any(|c| !c.coupled_active.is_empty()),
            warnings,
        }
    }

    /// Zero-anchor inputs for row `j` (anchors must be zero).
    pub fn zero_anchor_inputs(&self, problem: &ProsumerProblem, j: usize) -> ZeroAnchorInputs {
        let row = problem.matrix.row(j);
        let g0 = self.utility.grad_at_zero();
        let (mut s, mut sq) = (0.0, 0.0);
        for &(c, alpha) in &row.entries {
            s += alpha * (-g0[c] - self.price[c]);
            sq += alpha * alpha;
        }
        ZeroAnchorInputs {
            eta: 1.0 / sq,
            initial_rate_sum: s,
            rhs: row.rhs,
            mu: self.utility.mu(),
            lipschitz: self.utility.lipschitz(),
            norm_q_lower: norm(&self.q_lower),
            norm_q: norm(&self.q),
            norm_q_upper: norm(&self.q_upper),
        }
    }

    pub fn utility(&self) -> &ConvexNetUtility {
        &self.utility
    }
}

/// Bounds on row `j` of a prepared problem.
pub fn bounds_on_problem(
    problem: &ProsumerProblem,
    j: usize,
    price: &[f64],
    anchors: &AnchorChoice,
    options: &SolverOptions,
) -> Result<DualBounds, GsaaError> {
    Ok(BoundsContext::new(problem, price, anchors, options)?.bounds(problem, j))
}

fn convex_problem(scenario: &Scenario, prosumer: u32) -> Result<(&crate::model::Prosumer, ProsumerProblem), GsaaError> {
    if scenario.setting != Setting::GeneralConvex {
        return Err(ModelError::Setting("dual bounds need the general convex setting".into()).into());
    }
    let p = scenario.prosumer(prosumer)?;
    Ok((p, ProsumerProblem::build(scenario, p)?))
}

pub fn dual_bounds(scenario: &Scenario, constraint: ConstraintRef, anchors: &AnchorChoice) -> Result<DualBounds, GsaaError> {
    dual_bounds_for_target(scenario, constraint.prosumer, Target::Row { index: constraint.index }, anchors)
}

pub fn dual_bounds_for_target(
    scenario: &Scenario,
    prosumer: u32,
    target: Target,
    anchors: &AnchorChoice,
) -> Result<DualBounds, GsaaError> {
    let (p, problem) = convex_problem(scenario, prosumer)?;
    let j = locate(p, &problem, target)?;
    bounds_on_problem(&problem, j, &scenario.utility.cost, anchors, &SolverOptions::default())
}

fn zero_anchor_on(problem: &ProsumerProblem, j: usize, price: &[f64]) -> Result<(BoundsContext, DualBounds), GsaaError> {
    let ctx = BoundsContext::new(problem, price, &AnchorChoice::Zero, &SolverOptions::default())?;
    let mut b = ctx.bounds(problem, j);
    let (lower, upper) = zero_anchor_bounds(&ctx.zero_anchor_inputs(problem, j));
    b.lower = lower;
    b.upper = upper;
    Ok((ctx, b))
}

/// Bounds with both anchors at zero, written in terms of the initial
/// utility increasing rate `-grad F(0)`.
pub fn dual_bounds_zero_anchor(scenario: &Scenario, constraint: ConstraintRef) -> Result<DualBounds, GsaaError> {
    let (p, problem) = convex_problem(scenario, constraint.prosumer)?;
    let j = locate(p, &problem, Target::Row { index: constraint.index })?;
    Ok(zero_anchor_on(&problem, j, &scenario.utility.cost)?.1)
}

/// Thermostat-like window ending at `period`, zero anchors.
pub fn bounds_ac(scenario: &Scenario, prosumer: u32, period: usize) -> Result<DualBounds, GsaaError> {
    let (p, problem) = convex_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::AcUpper { period })?;
    Ok(zero_anchor_on(&problem, j, &scenario.utility.cost)?.1)
}

/// Net-buying row at `period`, zero anchors.
pub fn bounds_net_sell(scenario: &Scenario, prosumer: u32, period: usize) -> Result<DualBounds, GsaaError> {
    let (p, problem) = convex_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::NetSell { period })?;
    let (ctx, mut b) = zero_anchor_on(&problem, j, &scenario.utility.cost)?;
    let g0 = ctx.utility().grad_at_zero();
    let grads: Vec<f64> = problem.matrix.row(j).entries.iter().map(|&(c, _)| g0[c]).collect();
    let (lower, upper) =
        net_sell_bounds_formula(scenario.utility.cost[period - 1], &grads, b.lipschitz, b.norm_q_upper, b.norm_q);
    b.lower = lower;
    b.upper = upper;
    Ok(b)
}

/// EV discharge row at `period`, zero anchors. A zero discharge limit uses
/// the EV-specific form; a positive allowance falls back to the general
/// zero-anchor form, since the EV form assumes a zero right-hand side.
pub fn bounds_ev(scenario: &Scenario, prosumer: u32, period: usize) -> Result<DualBounds, GsaaError> {
    let (p, problem) = convex_problem(scenario, prosumer)?;
    let j = locate(p, &problem, Target::EvDischarge { period })?;
    let (ctx, mut b) = zero_anchor_on(&problem, j, &scenario.utility.cost)?;
    if problem.rows[j].rhs == 0.0 {
        let c = problem.matrix.row(j).entries[0].0;
        let (lower, upper) = ev_bounds_formula(
            scenario.utility.cost[period - 1],
            ctx.utility().grad_at_zero()[c],
            b.lipschitz,
            b.norm_q_upper,
            b.norm_q,
        );
        b.lower = lower;
        b.upper = upper;
    }
    Ok(b)
}

/// Zero-anchor bounds for every row of every prosumer, one context per prosumer.
pub fn all_zero_anchor_bounds(scenario: &Scenario) -> Result<Vec<DualBounds>, GsaaError> {
    let mut out = Vec::new();
    for p in &scenario.prosumers {
        let (_, problem) = convex_problem(scenario, p.id)?;
        let ctx = BoundsContext::new(&problem, &scenario.utility.cost, &AnchorChoice::Zero, &SolverOptions::default())?;
        for j in 0..problem.rows.len() {
            let mut b = ctx.bounds(&problem, j);
            let (lower, upper) = zero_anchor_bounds(&ctx.zero_anchor_inputs(&problem, j));
            b.lower = lower;
            b.upper = upper;
            out.push(b);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Appliance, ApplianceKind, Behavior, CurvatureBounds, Horizon, NetUtility, Prosumer, UtilityCompany};
    use crate::scenarios::paper_sec6_convex;

    fn single_ev(b_hat: f64, mu: f64, l: f64, lower: f64) -> Scenario {
        Scenario {
            horizon: Horizon::new(1).unwrap(),
            setting: Setting::GeneralConvex,
            utility: UtilityCompany { cost: vec![0.4] },
            prosumers: vec![Prosumer {
                id: 1,
                behavior: Behavior::NetSeller,
                appliances: vec![Appliance {
                    id: "EV".into(),
                    kind: ApplianceKind::Ev,
                    q_lower: Some(vec![Some(lower)]),
                    q_upper: None,
                    energy_windows: vec![],
                    net_utility: NetUtility::quadratic(vec![-0.01], vec![b_hat]),
                }],
                curvature: Some(CurvatureBounds { mu, lipschitz: l }),
            }],
        }
    }

    fn two_appliance_net_buyer() -> Scenario {
        let app = |id: &str, kind, a: f64, b: f64| Appliance {
            id: id.into(),
            kind,
            q_lower: None,
            q_upper: None,
            energy_windows: vec![],
            net_utility: NetUtility::quadratic(vec![a; 2], vec![b; 2]),
        };
        Scenario {
            horizon: Horizon::new(2).unwrap(),
            setting: Setting::GeneralConvex,
            utility: UtilityCompany { cost: vec![0.4, 0.4] },
            prosumers: vec![Prosumer {
                id: 3,
                behavior: Behavior::NetBuyer,
                appliances: vec![
                    app("ES", ApplianceKind::Storage, -0.02, 0.0),
                    app("EV", ApplianceKind::Ev, -0.015, 0.1),
                ],
                curvature: Some(CurvatureBounds {
                    mu: 0.03,
                    lipschitz: 0.04,
                }),
            }],
        }
    }

    #[test]
    fn bounds_collapse_when_optimum_is_zero() {
        let s = single_ev(0.1, 0.02, 0.02, 0.0);
        let b = bounds_ev(&s, 1, 1).unwrap();
        assert!((b.lower - 0.3).abs() < 1e-12 && (b.upper - 0.3).abs() < 1e-12);
        assert!((b.lambda_numeric - 0.3).abs() < 1e-8);
        assert!(b.tightness_held && b.tightness_strict);
    }

    #[test]
    fn zero_anchor_form_is_the_generic_theorem() {
        let s = single_ev(0.1, 0.018, 0.022, -1.0);
        let c = ConstraintRef { prosumer: 1, index: 0 };
        let generic = dual_bounds(&s, c, &AnchorChoice::Zero).unwrap();
        let zero = dual_bounds_zero_anchor(&s, c).unwrap();
        assert_eq!((generic.lower, generic.upper), (zero.lower, zero.upper));
        assert!(zero.contains(zero.lambda_numeric, 1e-8));
        assert!((zero.lambda_lower - zero.lambda_lower_numeric).abs() < 1e-6);
        assert!((zero.lambda_upper - zero.lambda_upper_numeric).abs() < 1e-6);
    }

    #[test]
    fn operating_point_anchors_share_the_optimum() {
        let s = single_ev(0.1, 0.018, 0.022, -1.0);
        let b = dual_bounds(&s, ConstraintRef { prosumer: 1, index: 0 }, &AnchorChoice::OperatingPoint).unwrap();
        assert!(b.operating_point_form);
        assert!((b.lambda_lower - b.lambda_numeric).abs() < 1e-6);
        assert!((b.lambda_upper - b.lambda_numeric).abs() < 1e-6);
        assert!((b.norm_q_lower - b.norm_q).abs() < 1e-6 && (b.norm_q_upper - b.norm_q).abs() < 1e-6);
        assert!(b.contains(b.lambda_numeric, 1e-8));
    }

    #[test]
    fn ev_form_matches_general_zero_rhs_form() {
        let s = single_ev(0.1, 0.018, 0.022, 0.0);
        let ev = bounds_ev(&s, 1, 1).unwrap();
        let gen = dual_bounds_zero_anchor(&s, ConstraintRef { prosumer: 1, index: 0 }).unwrap();
        assert!((ev.lower - gen.lower).abs() < 1e-15 && (ev.upper - gen.upper).abs() < 1e-15);
        assert!((ev.mu * ev.norm_q_lower - ev.lipschitz * ev.norm_q_upper).abs() < 1e-6);
    }

    #[test]
    fn ev_bounds_fall_as_initial_rate_rises() {
        let (lo1, hi1) = ev_bounds_formula(0.4, -0.1, 0.022, 1.0, 1.0);
        let (lo2, hi2) = ev_bounds_formula(0.4, -0.2, 0.022, 1.0, 1.0);
        assert!(lo2 < lo1 && hi2 < hi1);
    }

    #[test]
    fn net_sell_uses_appliance_count() {
        let s = two_appliance_net_buyer();
        let b = bounds_net_sell(&s, 3, 2).unwrap();
        assert_eq!(b.eta, 0.5);
        let gen = dual_bounds_zero_anchor(&s, ConstraintRef { prosumer: 3, index: b.constraint.index }).unwrap();
        assert!((b.lower - gen.lower).abs() < 1e-14 && (b.upper - gen.upper).abs() < 1e-14);
        assert!(b.tightness_held);
        assert!(b.contains(b.lambda_numeric, 1e-8));
    }

    #[test]
    fn preset_contains_numeric_multiplier() {
        for k in [0.0, 0.5, 1.0, 2.0] {
            let s = paper_sec6_convex(2.0, k);
            for id in [1, 2] {
                let b = bounds_ev(&s, id, 1).unwrap();
                assert!(b.contains(b.lambda_numeric, 1e-8), "{b:?}");
            }
        }
    }

    #[test]
    fn quadratic_setting_is_rejected() {
        let mut s = single_ev(0.1, 0.02, 0.02, 0.0);
        s.setting = Setting::Quadratic;
        assert!(matches!(bounds_ev(&s, 1, 1), Err(GsaaError::Model(ModelError::Setting(_)))));
    }

    #[test]
    fn sandwich_structure() {
        assert_eq!(sandwich(0.5, 0.1, 0.45, 0.2), (0.4, 0.6));
        let (lo, hi) = sandwich(0.05, 0.1, 0.0, 0.2);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.15).abs() < 1e-15);
    }
}
