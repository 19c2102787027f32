//! DSO welfare maximization, competitive-equilibrium verification and the
//! per-prosumer decoupling of the market problem.
//!
//! With linear utility cost the balance multiplier equals `b_0`, so the DSO
//! problem splits into one problem per prosumer facing price `b_0`. Each of
//! those is solved independently (in parallel) and merged by prosumer order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsaaError, ModelError, SolverError};
use crate::model::{
    compile_constraints, ConstraintOrigin, ConvexNetUtility, GeneralLinearConstraint, Horizon, Prosumer,
    Scenario, Setting,
};
use crate::solver::{
    kkt_report, solve_convex_primal, solve_qp_dual, ConstraintMatrix, ConvexProblem, KktReport, QpProblem,
    SmoothConvex, SolveOutcome, SolveStatus, SolverOptions, VarKey,
};

/// Objective data of one prosumer.
#[derive(Debug, Clone)]
pub enum ProsumerObjective {
    /// `sum a q^2 + b q + c` per column.
    Quadratic {
        a_hat: Vec<f64>,
        b_hat: Vec<f64>,
        constant: f64,
    },
    /// Negated net utility `F`.
    Convex(ConvexNetUtility),
}

/// One prosumer's decoupled problem: maximize net utility minus payment.
#[derive(Debug, Clone)]
pub struct ProsumerProblem {
    pub prosumer: u32,
    pub horizon: Horizon,
    pub appliances: Vec<String>,
    pub columns: Vec<VarKey>,
    pub rows: Vec<GeneralLinearConstraint>,
    pub matrix: ConstraintMatrix,
    pub objective: ProsumerObjective,
}

impl ProsumerProblem {
    pub fn build(scenario: &Scenario, prosumer: &Prosumer) -> Result<Self, ModelError> {
        let horizon = scenario.horizon;
        let rows = compile_constraints(prosumer, horizon)?;
        let matrix = crate::model::constraint_matrix(prosumer, horizon, &rows);
        let columns = prosumer
            .appliances
            .iter()
            .flat_map(|a| {
                horizon.labels().map(move |t| VarKey {
                    prosumer: prosumer.id,
                    appliance: a.id.clone(),
                    period: t,
                })
            })
            .collect();
        let objective = match scenario.setting {
            Setting::Quadratic => {
                let mut a_hat = Vec::new();
                let mut b_hat = Vec::new();
                let mut constant = 0.0;
                for a in &prosumer.appliances {
                    let q = a.net_utility.as_quadratic().ok_or_else(|| {
                        ModelError::Setting(format!("appliance {} needs a quadratic net utility", a.id))
                    })?;
                    a_hat.extend_from_slice(&q.a_hat);
                    b_hat.extend_from_slice(&q.b_hat);
                    constant += (0..horizon.periods()).map(|t| q.constant(t)).sum::<f64>();
                }
                ProsumerObjective::Quadratic { a_hat, b_hat, constant }
            }
            Setting::GeneralConvex => ProsumerObjective::Convex(ConvexNetUtility::for_prosumer(prosumer, horizon)?),
        };
        Ok(ProsumerProblem {
            prosumer: prosumer.id,
            horizon,
            appliances: prosumer.appliances.iter().map(|a| a.id.clone()).collect(),
            columns,
            rows,
            matrix,
            objective,
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Per-column price from a per-period price.
    pub fn column_prices(&self, price: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| price[c.period - 1]).collect()
    }

    /// Net utility `U - C`, constants included.
    pub fn net_utility(&self, q: &[f64]) -> f64 {
        match &self.objective {
            ProsumerObjective::Quadratic { a_hat, b_hat, constant } => {
                a_hat.iter().zip(b_hat).zip(q).map(|((a, b), x)| a * x * x + b * x).sum::<f64>() + constant
            }
            ProsumerObjective::Convex(f) => -f.value(q),
        }
    }

    /// Gradient of `F + price' q` (the minimization-form objective).
    pub fn min_gradient(&self, q: &[f64], price: &[f64]) -> Vec<f64> {
        let p = self.column_prices(price);
        match &self.objective {
            ProsumerObjective::Quadratic { a_hat, b_hat, .. } => (0..self.dim())
                .map(|i| -(2.0 * a_hat[i] * q[i] + b_hat[i]) + p[i])
                .collect(),
            ProsumerObjective::Convex(f) => {
                let mut g = f.gradient_vec(q);
                g.iter_mut().zip(&p).for_each(|(g, p)| *g += p);
                g
            }
        }
    }

    /// The quadratic program at `price` (quadratic setting only).
    pub fn qp(&self, price: &[f64]) -> Option<QpProblem> {
        match &self.objective {
            ProsumerObjective::Quadratic { a_hat, b_hat, .. } => {
                let p = self.column_prices(price);
                Some(QpProblem {
                    curvature: a_hat.iter().map(|a| 2.0 * a).collect(),
                    linear: b_hat.iter().zip(&p).map(|(b, p)| b - p).collect(),
                    constraints: self.matrix.clone(),
                    columns: self.columns.clone(),
                })
            }
            ProsumerObjective::Convex(_) => None,
        }
    }

    pub fn solve(&self, price: &[f64], options: &SolverOptions) -> Result<SolveOutcome, SolverError> {
        match &self.objective {
            ProsumerObjective::Quadratic { .. } => solve_qp_dual(&self.qp(price).expect("quadratic"), options),
            ProsumerObjective::Convex(f) => {
                let priced = Priced {
                    base: f,
                    price: self.column_prices(price),
                };
                solve_convex_primal(
                    &ConvexProblem {
                        objective: &priced,
                        mu: f.mu(),
                        lipschitz: f.lipschitz(),
                        constraints: &self.matrix,
                    },
                    options,
                )
            }
        }
    }

    /// Copy with row `j`'s capacity raised by `delta`.
    pub fn relaxed(&self, j: usize, delta: f64) -> Self {
        let mut p = self.clone();
        p.rows[j].rhs += delta;
        p.matrix.set_rhs(j, p.rows[j].rhs);
        p
    }

    pub fn kkt(&self, q: &[f64], duals: &[f64], price: &[f64]) -> Result<KktReport, SolverError> {
        kkt_report(&self.matrix, &self.min_gradient(q, price), q, duals)
    }
}

/// `F(q) + price' q`.
pub(crate) struct Priced<'a> {
    pub base: &'a ConvexNetUtility,
    pub price: Vec<f64>,
}

impl SmoothConvex for Priced<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + self.price.iter().zip(x).map(|(p, v)| p * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient(x, out);
        out.iter_mut().zip(&self.price).for_each(|(o, p)| *o += p);
    }
}

/// Raises one constraint capacity before solving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub prosumer: u32,
    pub constraint: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceDemand {
    pub appliance: String,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerDemand {
    pub prosumer: u32,
    pub appliances: Vec<ApplianceDemand>,
}

impl ProsumerDemand {
    /// Column vector in `appliance * H + period` order.
    pub fn flat(&self) -> Vec<f64> {
        self.appliances.iter().flat_map(|a| a.q.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub demand: Vec<ProsumerDemand>,
    pub supply: Vec<f64>,
}

impl Allocation {
    /// Total demand per period.
    pub fn total_demand(&self, horizon: usize) -> Vec<f64> {
        let mut total = vec![0.0; horizon];
        for p in &self.demand {
            for a in &p.appliances {
                for (t, v) in a.q.iter().enumerate() {
                    total[t] += v;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerDuals {
    pub prosumer: u32,
    pub origins: Vec<ConstraintOrigin>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub allocation: Allocation,
    pub price: Vec<f64>,
    pub duals: Vec<ProsumerDuals>,
    /// Multipliers of the balance rows.
    pub balance_duals: Vec<f64>,
    /// Social welfare, net-utility constants included.
    pub welfare: f64,
    /// Sum of net-utility constants contained in `welfare`.
    pub welfare_constant: f64,
    pub kkt: KktReport,
    pub per_prosumer_kkt: Vec<KktReport>,
}

impl EquilibriumResult {
    pub fn duals_of(&self, prosumer: u32) -> Option<&ProsumerDuals> {
        self.duals.iter().find(|d| d.prosumer == prosumer)
    }

    pub fn demand_of(&self, prosumer: u32) -> Option<&ProsumerDemand> {
        self.allocation.demand.iter().find(|d| d.prosumer == prosumer)
    }
}

pub fn build_problems(scenario: &Scenario) -> Result<Vec<ProsumerProblem>, ModelError> {
    scenario
        .prosumers
        .iter()
        .map(|p| ProsumerProblem::build(scenario, p))
        .collect()
}

pub fn solve_dso(scenario: &Scenario) -> Result<EquilibriumResult, GsaaError> {
    solve_dso_with(scenario, &[], &SolverOptions::default())
}

/// Solves the DSO problem with optional capacity relaxations.
pub fn solve_dso_with(
    scenario: &Scenario,
    relaxations: &[Relaxation],
    options: &SolverOptions,
) -> Result<EquilibriumResult, GsaaError> {
    let mut problems = build_problems(scenario)?;
    for r in relaxations {
        let idx = scenario.prosumer_index(r.prosumer)?;
        let rows = problems[idx].rows.len();
        if r.constraint >= rows {
            return Err(ModelError::UnknownConstraint {
                prosumer: r.prosumer,
                index: r.constraint,
                rows,
            }
            .into());
        }
        problems[idx] = problems[idx].relaxed(r.constraint, r.delta);
    }
    solve_problems(scenario, &problems, options)
}

pub(crate) fn solve_problems(
    scenario: &Scenario,
    problems: &[ProsumerProblem],
    options: &SolverOptions,
) -> Result<EquilibriumResult, GsaaError> {
    let price = scenario.utility.cost.clone();
    let outcomes: Vec<Result<SolveOutcome, SolverError>> =
        problems.par_iter().map(|p| p.solve(&price, options)).collect();
    let h = scenario.horizon.periods();
    let mut demand = Vec::with_capacity(problems.len());
    let mut duals = Vec::with_capacity(problems.len());
    let mut per_kkt = Vec::with_capacity(problems.len());
    let mut welfare = 0.0;
    let mut welfare_constant = 0.0;
    for (p, out) in problems.iter().zip(outcomes) {
        let out = out?;
        match out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(GsaaError::Infeasible {
                    prosumer: p.prosumer,
                    max_violation: p.matrix.max_violation(&out.primal),
                })
            }
            SolveStatus::MaxIterations => {
                return Err(GsaaError::NotConverged {
                    prosumer: p.prosumer,
                    residual: out.kkt.max_residual(),
                })
            }
        }
        welfare += p.net_utility(&out.primal);
        if let ProsumerObjective::Quadratic { constant, .. } = &p.objective {
            welfare_constant += constant;
        }
        per_kkt.push(p.kkt(&out.primal, &out.duals, &price)?);
        demand.push(ProsumerDemand {
            prosumer: p.prosumer,
            appliances: p
                .appliances
                .iter()
                .enumerate()
                .map(|(k, id)| ApplianceDemand {
                    appliance: id.clone(),
                    q: out.primal[k * h..(k + 1) * h].to_vec(),
                })
                .collect(),
        });
        duals.push(ProsumerDuals {
            prosumer: p.prosumer,
            origins: p.rows.iter().map(|r| r.origin.clone()).collect(),
            lambda: out.duals,
        });
    }
    let mut allocation = Allocation { demand, supply: vec![] };
    allocation.supply = allocation.total_demand(h);
    welfare -= price.iter().zip(&allocation.supply).map(|(p, s)| p * s).sum::<f64>();
    let kkt = per_kkt.iter().fold(KktReport::default(), |acc, k| acc.merge(k));
    Ok(EquilibriumResult {
        allocation,
        balance_duals: price.clone(),
        price,
        duals,
        welfare,
        welfare_constant,
        kkt,
        per_prosumer_kkt: per_kkt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerVerdict {
    pub prosumer: u32,
    /// KKT residuals of the given consumption against the best-response multipliers.
    pub kkt: KktReport,
    /// Max-norm distance to the prosumer's best response at the given price.
    pub best_response_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumVerdict {
    pub is_equilibrium: bool,
    pub clearing_residual: f64,
    pub utility_foc_residual: f64,
    pub prosumers: Vec<ProsumerVerdict>,
}

impl EquilibriumVerdict {
    pub fn max_residual(&self) -> f64 {
        self.prosumers
            .iter()
            .map(|p| p.kkt.max_residual())
            .fold(self.clearing_residual.max(self.utility_foc_residual), f64::max)
    }
}

/// Checks whether `(allocation, price)` is a competitive equilibrium with the
/// scenario's linear utility cost.
pub fn verify_equilibrium(
    scenario: &Scenario,
    allocation: &Allocation,
    price: &[f64],
    tol: f64,
) -> Result<EquilibriumVerdict, GsaaError> {
    let cost = scenario.utility.cost.clone();
    verify_equilibrium_with_cost(scenario, allocation, price, &move |_| cost.clone(), tol)
}

/// As [`verify_equilibrium`] with an arbitrary convex utility cost given by
/// its marginal cost at a supply vector.
pub fn verify_equilibrium_with_cost(
    scenario: &Scenario,
    allocation: &Allocation,
    price: &[f64],
    marginal_cost: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    tol: f64,
) -> Result<EquilibriumVerdict, GsaaError> {
    let h = scenario.horizon.periods();
    if price.len() != h || allocation.supply.len() != h {
        return Err(SolverError::Dimension(format!(
            "price has {} entries, supply {}, horizon {h}",
            price.len(),
            allocation.supply.len()
        ))
        .into());
    }
    let problems = build_problems(scenario)?;
    let clearing_residual = allocation
        .total_demand(h)
        .iter()
        .zip(&allocation.supply)
        .map(|(d, s)| (d - s).abs())
        .fold(0.0, f64::max);
    let mc = marginal_cost(&allocation.supply);
    let utility_foc_residual = mc.iter().zip(price).map(|(c, p)| (c - p).abs()).fold(0.0, f64::max);

    let options = SolverOptions::default();
    let verdicts: Vec<Result<ProsumerVerdict, GsaaError>> = problems
        .par_iter()
        .map(|p| {
            let given = allocation
                .demand
                .iter()
                .find(|d| d.prosumer == p.prosumer)
                .ok_or(ModelError::UnknownProsumer(p.prosumer))?;
            let q = given.flat();
            if q.len() != p.dim() {
                return Err(SolverError::Dimension(format!(
                    "prosumer {}: {} demand entries for {} columns",
                    p.prosumer,
                    q.len(),
                    p.dim()
                ))
                .into());
            }
            let best = p.solve(price, &options)?;
            if best.status == SolveStatus::Infeasible {
                return Err(GsaaError::Infeasible {
                    prosumer: p.prosumer,
                    max_violation: p.matrix.max_violation(&best.primal),
                });
            }
            Ok(ProsumerVerdict {
                prosumer: p.prosumer,
                kkt: p.kkt(&q, &best.duals, price)?,
                best_response_gap: q
                    .iter()
                    .zip(&best.primal)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            })
        })
        .collect();
    let prosumers = verdicts.into_iter().collect::<Result<Vec<_>, _>>()?;
    let is_equilibrium = clearing_residual <= tol
        && utility_foc_residual <= tol
        && prosumers.iter().all(|p| p.kkt.within(tol));
    Ok(EquilibriumVerdict {
        is_equilibrium,
        clearing_residual,
        utility_foc_residual,
        prosumers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// Max-norm difference of joint and per-prosumer consumption.
    pub primal_discrepancy: f64,
    /// Max-norm difference of joint and per-prosumer multipliers.
    pub dual_discrepancy: f64,
    pub joint_kkt: KktReport,
}

/// Solves the stacked market problem in one piece and compares it with the
/// per-prosumer solves.
pub fn check_decoupling(scenario: &Scenario) -> Result<DecouplingReport, GsaaError> {
    let problems = build_problems(scenario)?;
    let price = scenario.utility.cost.clone();
    let options = SolverOptions::default();
    let separate: Vec<SolveOutcome> = problems
        .par_iter()
        .map(|p| p.solve(&price, &options))
        .collect::<Result<_, _>>()?;
    let joint = match scenario.setting {
        Setting::Quadratic => {
            let qps: Vec<QpProblem> = problems.iter().map(|p| p.qp(&price).expect("quadratic")).collect();
            let refs: Vec<&QpProblem> = qps.iter().collect();
            solve_qp_dual(&QpProblem::stack(&refs), &options)?
        }
        Setting::GeneralConvex => {
            let parts: Vec<(Priced<'_>, usize)> = problems
                .iter()
                .map(|p| match &p.objective {
                    ProsumerObjective::Convex(f) => (
                        Priced {
                            base: f,
                            price: p.column_prices(&price),
                        },
                        p.dim(),
                    ),
                    ProsumerObjective::Quadratic { .. } => unreachable!("convex setting"),
                })
                .collect();
            let stacked = Stacked { parts };
            let (mu, lip) = problems.iter().fold((f64::INFINITY, 0.0f64), |(m, l), p| match &p.objective {
                ProsumerObjective::Convex(f) => (m.min(f.mu()), l.max(f.lipschitz())),
                ProsumerObjective::Quadratic { .. } => (m, l),
            });
            let blocks: Vec<&ConstraintMatrix> = problems.iter().map(|p| &p.matrix).collect();
            let matrix = ConstraintMatrix::block_diagonal(&blocks);
            solve_convex_primal(
                &ConvexProblem {
                    objective: &stacked,
                    mu: if mu.is_finite() { mu } else { 1.0 },
                    lipschitz: if lip > 0.0 { lip } else { 1.0 },
                    constraints: &matrix,
                },
                &options,
            )?
        }
    };
    let (mut col, mut row) = (0, 0);
    let mut primal_discrepancy = 0.0f64;
    let mut dual_discrepancy = 0.0f64;
    for out in &separate {
        for (k, v) in out.primal.iter().enumerate() {
            primal_discrepancy = primal_discrepancy.max((v - joint.primal[col + k]).abs());
        }
        for (k, v) in out.duals.iter().enumerate() {
            dual_discrepancy = dual_discrepancy.max((v - joint.duals[row + k]).abs());
        }
        col += out.primal.len();
        row += out.duals.len();
    }
    Ok(DecouplingReport {
        primal_discrepancy,
        dual_discrepancy,
        joint_kkt: joint.kkt,
    })
}

struct Stacked<'a> {
    parts: Vec<(Priced<'a>, usize)>,
}

impl SmoothConvex for Stacked<'_> {
    fn dim(&self) -> usize {
        self.parts.iter().map(|p| p.1).sum()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut off = 0;
        let mut v = 0.0;
        for (f, n) in &self.parts {
            v += f.value(&x[off..off + n]);
            off += n;
        }
        v
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut off = 0;
        for (f, n) in &self.parts {
            f.gradient(&x[off..off + n], &mut out[off..off + n]);
            off += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Appliance, ApplianceKind, Behavior, NetUtility, UtilityCompany};
    use crate::scenarios::{paper_sec6, Experiment};

    fn single_ev(lower: Option<f64>, upper: Option<f64>, cost: f64) -> Scenario {
        Scenario {
            horizon: Horizon::new(1).unwrap(),
            setting: Setting::Quadratic,
            utility: UtilityCompany { cost: vec![cost] },
            prosumers: vec![Prosumer {
                id: 1,
                behavior: Behavior::NetSeller,
                appliances: vec![Appliance {
                    id: "EV".into(),
                    kind: ApplianceKind::Ev,
                    q_lower: Some(vec![lower]),
                    q_upper: Some(vec![upper]),
                    energy_windows: vec![],
                    net_utility: NetUtility::quadratic(vec![-0.01], vec![0.1]),
                }],
                curvature: None,
            }],
        }
    }

    #[test]
    fn single_ev_discharge_binds() {
        let r = solve_dso(&single_ev(Some(0.0), None, 0.4)).unwrap();
        let q = r.allocation.demand[0].appliances[0].q[0];
        assert!(q.abs() < 1e-12);
        assert_eq!(r.price, vec![0.4]);
        assert!((r.duals[0].lambda[0] - 0.3).abs() < 1e-12);
        assert!(r.welfare.abs() < 1e-12);
        assert!(r.kkt.within(1e-10));
    }

    #[test]
    fn loose_bounds_give_stationary_point() {
        let r = solve_dso(&single_ev(Some(-1e6), Some(1e6), 0.4)).unwrap();
        let q = r.allocation.demand[0].appliances[0].q[0];
        // stationarity of a q^2 + (b - b0) q
        assert!((q - (0.4 - 0.1) / (2.0 * -0.01)).abs() < 1e-9, "{q}");
    }

    #[test]
    fn identical_prosumers_get_identical_allocations() {
        let mut s = single_ev(Some(-2.0), Some(3.0), 0.05);
        let mut twin = s.prosumers[0].clone();
        twin.id = 2;
        s.prosumers.push(twin);
        let r = solve_dso(&s).unwrap();
        assert_eq!(r.allocation.demand[0].appliances, r.allocation.demand[1].appliances);
        assert!((r.allocation.supply[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn welfare_decomposes() {
        let s = paper_sec6(Experiment::EvDischarge);
        let r = solve_dso(&s).unwrap();
        let problems = build_problems(&s).unwrap();
        let manual: f64 = problems
            .iter()
            .zip(&r.allocation.demand)
            .map(|(p, d)| p.net_utility(&d.flat()))
            .sum::<f64>()
            - s.utility.cost.iter().zip(&r.allocation.supply).map(|(c, q)| c * q).sum::<f64>();
        assert!((manual - r.welfare).abs() < 1e-9 * (1.0 + r.welfare.abs()));
    }

    #[test]
    fn verify_accepts_solution_and_rejects_perturbations() {
        let s = paper_sec6(Experiment::NetSell);
        let r = solve_dso(&s).unwrap();
        let v = verify_equilibrium(&s, &r.allocation, &r.price, 1e-6).unwrap();
        assert!(v.is_equilibrium, "{v:?}");

        let mut price = r.price.clone();
        price[3] += 0.01;
        let v = verify_equilibrium(&s, &r.allocation, &price, 1e-6).unwrap();
        assert!(!v.is_equilibrium);
        assert!((v.utility_foc_residual - 0.01).abs() < 1e-12);

        let mut alloc = r.allocation.clone();
        alloc.supply[0] += 0.5;
        let v = verify_equilibrium(&s, &alloc, &r.price, 1e-6).unwrap();
        assert!(!v.is_equilibrium);
        assert!((v.clearing_residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decoupling_on_presets() {
        let rep = check_decoupling(&paper_sec6(Experiment::NetSell)).unwrap();
        assert!(rep.primal_discrepancy <= 1e-6 && rep.dual_discrepancy <= 1e-6, "{rep:?}");
        let rep = check_decoupling(&single_ev(Some(0.0), Some(5.0), 0.4)).unwrap();
        assert_eq!(rep.primal_discrepancy, 0.0);
        assert_eq!(rep.dual_discrepancy, 0.0);
        let rep = check_decoupling(&crate::scenarios::paper_sec6_convex(2.0, 1.0)).unwrap();
        assert!(rep.primal_discrepancy <= 1e-5 && rep.dual_discrepancy <= 1e-5, "{rep:?}");
    }

    #[test]
    fn infeasible_prosumer_is_named() {
        let mut s = single_ev(Some(0.0), Some(1.0), 0.4);
        s.prosumers[0].appliances[0].q_lower = Some(vec![Some(2.0)]);
        s.prosumers[0].appliances[0].q_upper = Some(vec![Some(3.0)]);
        s.prosumers[0].appliances[0].energy_windows.clear();
        // lower > upper is rejected by validation, so build the contradiction with a window
        s.horizon = Horizon::new(1).unwrap();
        s.prosumers[0].appliances[0].energy_windows.push(crate::model::EnergyWindow {
            periods: vec![1],
            alpha: vec![1.0],
            energy_lower: None,
            energy_upper: Some(1.0),
        });
        match solve_dso(&s) {
            Err(GsaaError::Infeasible { prosumer, .. }) => assert_eq!(prosumer, 1),
            other => panic!("{other:?}"),
        }
    }
}
