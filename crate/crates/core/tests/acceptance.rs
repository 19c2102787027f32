//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if any fails.

use std::path::PathBuf;
use std::time::Instant;

use gsaa_core::equilibrium::{build_problems, check_decoupling, solve_dso, verify_equilibrium, EquilibriumResult};
use gsaa_core::export::write_region_grid;
use gsaa_core::gsaa_convex::{
    bounds_vs_discharge, classify_region, region_grid, AnchorChoice, BoundsContext, Region, RegionParams,
};
use gsaa_core::gsaa_quad::{check_tightness, closed_form_multiplier, incremental_gsaa_sweep, shadow_price_ev};
use gsaa_core::model::{CurvatureBounds, NetUtility, Scenario, Setting};
use gsaa_core::ranking::rank;
use gsaa_core::scenarios::{
    paper_sec6, random_qp, random_scenario, random_sec6, two_prosumer_ev, Experiment, RandomScenarioConfig, TwoEvCase,
};
use gsaa_core::solver::{brute_force_active_set, solve_qp_dual, SolveStatus, SolverOptions};
use gsaa_core::targets::{locate_all, ConstraintRef, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dual(res: &EquilibriumResult, prosumer: u32, j: usize) -> f64 {
    res.duals_of(prosumer).expect("prosumer").lambda[j]
}

fn config(setting: Setting) -> RandomScenarioConfig {
    RandomScenarioConfig {
        setting,
        ..RandomScenarioConfig::default()
    }
}

fn closed_form_vs_dual() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut scenarios, mut rows, mut drawn) = (0, 0, 0);
    let mut worst = 0.0f64;
    while scenarios < 200 && drawn < 2000 {
        drawn += 1;
        let s = random_scenario(&mut rng, &config(Setting::Quadratic));
        let res = solve_dso(&s).expect("feasible by construction");
        let mut tight_here = 0;
        for (problem, demand) in build_problems(&s).unwrap().iter().zip(&res.allocation.demand) {
            let duals = &res.duals_of(problem.prosumer).unwrap().lambda;
            let q = demand.flat();
            for j in 0..problem.rows.len() {
                if !check_tightness(&problem.matrix, j, &q, duals).holds() {
                    continue;
                }
                let v = closed_form_multiplier(problem, j, &s.utility.cost).unwrap().max(0.0);
                worst = worst.max((v - duals[j]).abs());
                tight_here += 1;
            }
        }
        if tight_here > 0 {
            scenarios += 1;
            rows += tight_here;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        scenarios >= 200 && worst <= 1e-6 && secs <= 60.0,
        format!("{scenarios} scenarios ({drawn} drawn), {rows} tight rows, max |closed - dual| {worst:.1e}, {secs:.1} s"),
    )
}

fn ev_ranking() -> Outcome {
    let s = paper_sec6(Experiment::EvDischarge);
    let res = solve_dso(&s).unwrap();
    let mut estimates = Vec::new();
    let mut worst = 0.0f64;
    for (p, want) in [(1u32, 0.3), (2, 0.2)] {
        let e = shadow_price_ev(&s, p, 1).unwrap();
        let v = e.value.lower();
        worst = worst.max((v - want).abs()).max((v - dual(&res, p, e.constraint.index)).abs());
        estimates.push(e);
    }
    let ranking = rank(estimates, false);
    let order: Vec<u32> = ranking.entries.iter().map(|e| e.estimate.constraint.prosumer).collect();
    outcome(
        worst <= 1e-8 && order == [1, 2],
        format!("estimates 0.3 / 0.2, max error {worst:.1e}, ranking {order:?}"),
    )
}

fn sweeps_upper_bound() -> Outcome {
    let mut cases: Vec<(String, Scenario, bool)> = vec![
        ("preset net-sell".into(), paper_sec6(Experiment::NetSell), true),
        ("preset ev".into(), paper_sec6(Experiment::EvDischarge), true),
        ("convex ev".into(), gsaa_core::scenarios::paper_sec6_convex(2.0, 0.0), false),
    ];
    for seed in 0..20 {
        cases.push((format!("net-sell seed {seed}"), random_sec6(seed, Experiment::NetSell), false));
        cases.push((format!("ev seed {seed}"), random_sec6(seed, Experiment::EvDischarge), false));
    }
    let (mut sweeps, mut min_slack, mut min_gap_step) = (0, f64::INFINITY, f64::INFINITY);
    let mut failures = Vec::new();
    for (name, s, check_gap) in &cases {
        for p in &s.prosumers {
            let t = incremental_gsaa_sweep(s, ConstraintRef { prosumer: p.id, index: 0 }, 1.0, 10).unwrap();
            sweeps += 1;
            let mut prev_gap = 0.0;
            for r in &t.rows {
                let gap = r.cumulative_projected - r.cumulative_realized;
                min_slack = min_slack.min(gap);
                if gap < -1e-8 {
                    failures.push(format!("{name} prosumer {} step {}", p.id, r.step));
                }
                if *check_gap {
                    min_gap_step = min_gap_step.min(gap - prev_gap);
                    if gap < prev_gap - 1e-8 {
                        failures.push(format!("{name} prosumer {} gap shrinks at step {}", p.id, r.step));
                    }
                }
                prev_gap = gap;
            }
            if t.rows.len() != 10 {
                failures.push(format!("{name} prosumer {}: sweep stopped early", p.id));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{sweeps} sweeps, min projected - realized {min_slack:.2e}, min gap increment on presets {min_gap_step:.2e}{}",
            if failures.is_empty() { String::new() } else { format!(", failures {failures:?}") }
        ),
    )
}

fn equilibrium_theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scenarios: Vec<Scenario> = vec![paper_sec6(Experiment::NetSell), paper_sec6(Experiment::EvDischarge)];
    for setting in [Setting::Quadratic, Setting::GeneralConvex] {
        scenarios.extend((0..50).map(|_| random_scenario(&mut rng, &config(setting))));
    }
    let (mut worst, mut accepted, mut rejected) = (0.0f64, 0, 0);
    for s in &scenarios {
        let res = solve_dso(s).unwrap();
        let v = verify_equilibrium(s, &res.allocation, &s.utility.cost, 1e-6).unwrap();
        worst = worst.max(v.max_residual());
        accepted += v.is_equilibrium as usize;
        let h = s.horizon.periods();
        let t = rng.gen_range(0..h);
        for shift in [1e-2, -1e-2] {
            let mut single = s.utility.cost.clone();
            single[t] += shift;
            let all: Vec<f64> = s.utility.cost.iter().map(|c| c + shift).collect();
            for price in [single, all] {
                rejected += !verify_equilibrium(s, &res.allocation, &price, 1e-6).unwrap().is_equilibrium as usize;
            }
        }
    }
    let n = scenarios.len();
    outcome(
        accepted == n && rejected == 4 * n,
        format!("{accepted}/{n} equilibria accepted (max residual {worst:.1e}), {rejected}/{} perturbed prices rejected", 4 * n),
    )
}

fn decoupling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut parts = Vec::new();
    let mut pass = true;
    for setting in [Setting::Quadratic, Setting::GeneralConvex] {
        let (mut primal, mut dual) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let r = check_decoupling(&random_scenario(&mut rng, &config(setting))).unwrap();
            primal = primal.max(r.primal_discrepancy);
            dual = dual.max(r.dual_discrepancy);
        }
        pass &= primal <= 1e-6 && dual <= 1e-6;
        parts.push(format!("{setting:?}: primal {primal:.1e}, dual {dual:.1e}"));
    }
    outcome(pass, format!("100 instances per setting; {}", parts.join("; ")))
}

/// Convex instances with equal curvature everywhere, so `mu = L`.
fn uniform_curvature(mut s: Scenario, rng: &mut ChaCha8Rng) -> Scenario {
    for p in &mut s.prosumers {
        let a = rng.gen_range(-0.2..-0.01);
        for app in &mut p.appliances {
            if let NetUtility::Quadratic(q) = &mut app.net_utility {
                q.a_hat.iter_mut().for_each(|v| *v = a);
            }
        }
        p.curvature = Some(CurvatureBounds {
            mu: -2.0 * a,
            lipschitz: -2.0 * a,
        });
    }
    s
}

/// Shared convex instance set of criteria 6 and 7.
fn convex_instances() -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..300).map(|_| random_scenario(&mut rng, &config(Setting::GeneralConvex))).collect()
}

fn sandwich(instances: &[Scenario]) -> Outcome {
    let options = SolverOptions::default();
    let (mut tight_instances, mut rows, mut min_slack) = (0, 0, f64::INFINITY);
    for s in instances {
        let res = solve_dso(s).unwrap();
        let mut tight_here = 0;
        for problem in build_problems(s).unwrap() {
            for anchors in [AnchorChoice::Zero, AnchorChoice::OperatingPoint] {
                let ctx = BoundsContext::new(&problem, &s.utility.cost, &anchors, &options).unwrap();
                for j in 0..problem.rows.len() {
                    let b = ctx.bounds(&problem, j);
                    if !b.tightness_held {
                        continue;
                    }
                    let lambda = dual(&res, problem.prosumer, j);
                    min_slack = min_slack.min(lambda - b.lower).min(b.upper - lambda);
                    tight_here += 1;
                }
            }
        }
        if tight_here > 0 {
            tight_instances += 1;
            rows += tight_here;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (mut collapse_rows, mut collapse_err) = (0, 0.0f64);
    for s in instances.iter().take(100) {
        let s = uniform_curvature(s.clone(), &mut rng);
        let res = solve_dso(&s).unwrap();
        for problem in build_problems(&s).unwrap() {
            let ctx = BoundsContext::new(&problem, &s.utility.cost, &AnchorChoice::OperatingPoint, &options).unwrap();
            for j in 0..problem.rows.len() {
                let b = ctx.bounds(&problem, j);
                if !b.tightness_held {
                    continue;
                }
                let lambda = dual(&res, problem.prosumer, j);
                collapse_err = collapse_err.max((b.lambda_lower - lambda).abs()).max((b.lambda_upper - lambda).abs());
                collapse_rows += 1;
            }
        }
    }
    outcome(
        tight_instances >= 200 && min_slack >= -1e-8 && collapse_rows > 0 && collapse_err <= 1e-6,
        format!(
            "{tight_instances} instances, {rows} tight (row, anchor) pairs, min containment slack {min_slack:.1e}; \
             mu = L with anchors at q*: {collapse_rows} rows, max |surrogate multiplier - dual| {collapse_err:.1e}"
        ),
    )
}

/// Zero-capacity rows binding alone under zero anchors: (rows checked, max error).
fn zero_rhs_rows(instances: &[Scenario]) -> (usize, f64) {
    let options = SolverOptions::default();
    let (mut rows, mut worst) = (0, 0.0f64);
    for s in instances {
        for problem in build_problems(s).unwrap() {
            let ctx = BoundsContext::new(&problem, &s.utility.cost, &AnchorChoice::Zero, &options).unwrap();
            for j in 0..problem.rows.len() {
                if problem.rows[j].rhs != 0.0 {
                    continue;
                }
                let b = ctx.bounds(&problem, j);
                if !b.tightness_strict {
                    continue;
                }
                worst = worst.max((b.mu * b.norm_q_lower - b.lipschitz * b.norm_q_upper).abs());
                rows += 1;
            }
        }
    }
    (rows, worst)
}

fn zero_rhs_identity(instances: &[Scenario]) -> Outcome {
    let (random_rows, random_worst) = zero_rhs_rows(instances);
    // two-EV instances with no discharge allowed, where the row binds more often
    let ev: Vec<Scenario> = (1..=12)
        .flat_map(|i| {
            [0.5, 1.0, 2.0, 3.0].map(|beta| {
                two_prosumer_ev(&TwoEvCase {
                    a_hat: -0.01,
                    b_hat: 0.03 * i as f64,
                    mu: 0.018,
                    lipschitz: 0.022,
                    beta,
                    cost: 0.4,
                    allowed_discharge: 0.0,
                })
            })
        })
        .collect();
    let (ev_rows, ev_worst) = zero_rhs_rows(&ev);
    let worst = random_worst.max(ev_worst);
    outcome(
        random_rows > 0 && worst <= 1e-6,
        format!(
            "zero-capacity rows binding alone: {random_rows} in the random set, {ev_rows} in two-EV instances; \
             max |mu |q_lo| - L |q_hi|| {worst:.1e}"
        ),
    )
}

fn ev_duals(case: &TwoEvCase) -> (f64, f64) {
    let s = two_prosumer_ev(case);
    let res = solve_dso(&s).unwrap();
    let rows: Vec<usize> = locate_all(&s, Target::EvDischarge { period: 1 })
        .into_iter()
        .map(|(_, j)| j.unwrap())
        .collect();
    (dual(&res, 1, rows[0]), dual(&res, 2, rows[1]))
}

fn beta_regions(grid_path: &PathBuf) -> Outcome {
    let base = TwoEvCase {
        a_hat: -0.01,
        b_hat: 0.1,
        mu: 0.018,
        lipschitz: 0.022,
        beta: 1.0,
        cost: 0.4,
        allowed_discharge: 1.0,
    };
    let params = RegionParams {
        b0: base.cost,
        lipschitz: base.lipschitz,
        norm_qk: base.allowed_discharge,
        norm_ql: base.allowed_discharge,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut red, mut blue, mut draws) = (0, 0, 0);
    let mut failures = Vec::new();
    while (red < 50 || blue < 50) && draws < 1_000_000 {
        draws += 1;
        let x = rng.gen_range(0.0..1.0);
        let beta = rng.gen_range(0.0..5.0);
        let region = classify_region(&params, x, beta);
        let claim = match region {
            Region::KDominates if red < 50 => {
                red += 1;
                true
            }
            Region::LDominates if blue < 50 => {
                blue += 1;
                false
            }
            _ => continue,
        };
        let (k, l) = ev_duals(&TwoEvCase { b_hat: x, beta, ..base });
        if (claim && k <= l) || (!claim && l <= k) {
            failures.push(format!("x={x:.4} beta={beta:.4}: lambda_k={k:.6} lambda_l={l:.6}"));
        }
    }
    let xs: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let betas: Vec<f64> = (1..=100).map(|i| i as f64 * 0.05).collect();
    let grid = region_grid(&params, &xs, &betas);
    let file = std::fs::File::create(grid_path).expect("grid file");
    write_region_grid(file, &grid).expect("grid written");
    outcome(
        red == 50 && blue == 50 && failures.is_empty(),
        format!(
            "{red} red and {blue} blue samples, {} ordering failures{}; grid {}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default(),
            grid_path.display()
        ),
    )
}

fn discharge_comparison() -> Outcome {
    let case = TwoEvCase {
        a_hat: -0.01,
        b_hat: 0.1,
        mu: 0.018,
        lipschitz: 0.022,
        beta: 2.0,
        cost: 0.4,
        allowed_discharge: 0.0,
    };
    let ks: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
    let rows = bounds_vs_discharge(&case, &ks).unwrap();
    let (p1, p2) = rows.split_at(ks.len());
    let separated: Vec<f64> = p1.iter().zip(p2).filter(|(a, b)| a.lower > b.upper).map(|(a, _)| a.allowed_discharge).collect();
    let at_one = ks.iter().position(|&k| (k - 1.0).abs() < 1e-12).unwrap();
    let (a, b) = (&p1[at_one], &p2[at_one]);
    outcome(
        !separated.is_empty(),
        format!(
            "prosumer 1 lower > prosumer 2 upper for K in [{:.2}, {:.2}] ({} grid points); at K=1 pointwise [{:.3}, {:.3}] vs [{:.3}, {:.3}], \
             cumulative [{:.3}, {:.3}] vs [{:.3}, {:.3}]",
            separated.first().copied().unwrap_or(f64::NAN),
            separated.last().copied().unwrap_or(f64::NAN),
            separated.len(),
            a.lower,
            a.upper,
            b.lower,
            b.upper,
            a.cumulative_lower,
            a.cumulative_upper,
            b.cumulative_lower,
            b.cumulative_upper
        ),
    )
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut primal, mut duals, mut gap, mut unique, mut bad) = (0.0f64, 0.0f64, 0.0f64, 0, 0);
    for _ in 0..500 {
        let qp = random_qp(&mut rng, 6, 8);
        let fast = solve_qp_dual(&qp, &SolverOptions::default()).unwrap();
        let slow = brute_force_active_set(&qp).unwrap();
        if fast.status != SolveStatus::Optimal || slow.status != SolveStatus::Optimal {
            bad += 1;
            continue;
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        primal = primal.max(diff(&fast.primal, &slow.primal));
        if slow.unique_duals == Some(true) {
            unique += 1;
            duals = duals.max(diff(&fast.duals, &slow.duals));
        }
        gap = gap.max((qp.dual_objective(&fast.duals) - qp.objective(&fast.primal)).abs());
    }
    outcome(
        bad == 0 && primal <= 1e-6 && duals <= 1e-6 && gap <= 1e-6,
        format!("500 QPs ({unique} with unique duals, {bad} not optimal): primal {primal:.1e}, dual {duals:.1e}, duality gap {gap:.1e}"),
    )
}

fn main() {
    let grid_path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("region_grid.csv");
    let instances = convex_instances();
    let criteria: Vec<(&str, Check)> = vec![
        ("closed form vs numeric dual", Box::new(closed_form_vs_dual)),
        ("EV ranking on the fixed draw", Box::new(ev_ranking)),
        ("projected gain bounds realized gain", Box::new(sweeps_upper_bound)),
        ("equilibrium verification", Box::new(equilibrium_theorem)),
        ("joint vs decoupled solves", Box::new(decoupling)),
        ("dual bounds sandwich", Box::new(|| sandwich(&instances))),
        ("zero-capacity curvature identity", Box::new(|| zero_rhs_identity(&instances))),
        ("beta regions order the multipliers", Box::new(|| beta_regions(&grid_path))),
        ("bounds separate at beta = 2", Box::new(discharge_comparison)),
        ("solver vs exhaustive oracle", Box::new(solver_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {:>2} {} {name}: {} [{:.2} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
