use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gsaa_core::equilibrium::{solve_dso_with, verify_equilibrium};
use gsaa_core::error::GsaaError;
use gsaa_core::export;
use gsaa_core::gsaa_convex::{
    beta_case_study, bhat_scan, bounds_ac, bounds_ev, bounds_net_sell, bounds_vs_discharge, dual_bounds_for_target,
    region_grid, AnchorChoice, RegionParams,
};
use gsaa_core::gsaa_quad::{
    incremental_gsaa_sweep, shadow_price_ac, shadow_price_closed_form, shadow_price_ev, shadow_price_net_sell,
    ConstraintRef, ShadowPriceEstimate,
};
use gsaa_core::model::Scenario;
use gsaa_core::ranking::{rank, render_ranking};
use gsaa_core::scenarios::{preset, random_sec6, Experiment, TwoEvCase, PRESETS};
use gsaa_core::solver::SolverOptions;
use gsaa_core::targets::{locate_all, Target};

use crate::{
    Anchors, BoundsArgs, CaseStudyArgs, Command, EstimateArgs, ExperimentArg, GenArgs, OutArg, ScenarioSource,
    SolveArgs, SweepArgs, TargetArgs, VerifyArgs,
};

/// Bad flag values caught after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// The allocation failed verification.
#[derive(Debug, thiserror::Error)]
#[error("not a competitive equilibrium")]
struct NotEquilibrium;

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<GsaaError>().is_some_and(GsaaError::is_infeasible) {
        2
    } else if e.downcast_ref::<NotEquilibrium>().is_some() {
        3
    } else {
        1
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::GsaaQuad(a) => gsaa_quad(a),
        Command::GsaaBounds(a) => gsaa_bounds(a),
        Command::Sweep(a) => sweep(a),
        Command::CaseStudy(a) => case_study(a),
        Command::Gen(a) => gen(a),
    }
    .map(|()| 0)
}

fn load(source: &ScenarioSource) -> Result<Scenario> {
    match (&source.scenario, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_json(&text).with_context(|| format!("loading {}", path.display()))
        }
        (None, Some(name)) => preset(name).ok_or_else(|| usage(format!("unknown preset {name:?}; known: {PRESETS:?}"))),
        (None, None) => Err(usage("either --scenario or --preset is required")),
    }
}

fn out_dir(out: &OutArg) -> Result<Option<PathBuf>> {
    match &out.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn positive_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    positive_tol(a.tol)?;
    let scenario = load(&a.source)?;
    let result = solve_dso_with(&scenario, &[], &SolverOptions::with_tol(a.tol))?;
    println!("social welfare      {:.9}", result.welfare);
    println!("max KKT residual    {:.3e}", result.kkt.max_residual());
    println!("{:<9} {:<10} {:>14}", "prosumer", "appliance", "total q");
    for d in &result.allocation.demand {
        for app in &d.appliances {
            println!("{:<9} {:<10} {:>14.6}", d.prosumer, app.appliance, app.q.iter().sum::<f64>());
        }
    }
    if let Some(dir) = out_dir(&a.out)? {
        export::write_allocation(create(&dir, "allocation.csv")?, &result)?;
        export::write_supply(create(&dir, "supply.csv")?, &result.allocation.supply)?;
        fs::write(dir.join("equilibrium.json"), serde_json::to_string_pretty(&result)?)?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    positive_tol(a.tol)?;
    let scenario = load(&a.source)?;
    let file = File::open(&a.allocation).with_context(|| format!("opening {}", a.allocation.display()))?;
    let (mut allocation, price) =
        export::read_allocation(file, &scenario).with_context(|| format!("reading {}", a.allocation.display()))?;
    if let Some(path) = &a.supply {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        allocation.supply = export::read_supply(file, scenario.horizon.periods())?;
    }
    let verdict = verify_equilibrium(&scenario, &allocation, &price, a.tol)?;
    println!("market clearing residual   {:.3e}", verdict.clearing_residual);
    println!("utility optimality residual {:.3e}", verdict.utility_foc_residual);
    for p in &verdict.prosumers {
        println!(
            "prosumer {:<4} KKT {:.3e}  best-response gap {:.3e}",
            p.prosumer,
            p.kkt.max_residual(),
            p.best_response_gap
        );
    }
    if verdict.is_equilibrium {
        println!("competitive equilibrium: yes");
        Ok(())
    } else {
        println!("competitive equilibrium: no");
        Err(NotEquilibrium.into())
    }
}

fn parse_constraint(text: &str) -> Result<ConstraintRef> {
    let (p, j) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("--constraint expects P:J, got {text:?}")))?;
    Ok(ConstraintRef {
        prosumer: p.trim().parse().map_err(|_| usage(format!("bad prosumer id {p:?}")))?,
        index: j.trim().parse().map_err(|_| usage(format!("bad row index {j:?}")))?,
    })
}

enum Selection {
    Named(Target),
    Row(ConstraintRef),
}

fn selection(t: &TargetArgs, period: usize, scenario: &Scenario) -> Result<Selection> {
    let h = scenario.horizon.periods();
    if t.constraint.is_none() && !(1..=h).contains(&period) {
        return Err(usage(format!("--period must lie in 1..={h}")));
    }
    Ok(if t.ev {
        Selection::Named(Target::EvDischarge { period })
    } else if t.net_sell {
        Selection::Named(Target::NetSell { period })
    } else if t.ac {
        Selection::Named(Target::AcUpper { period })
    } else {
        Selection::Row(parse_constraint(t.constraint.as_deref().expect("clap group"))?)
    })
}

/// Runs `each` for every prosumer that has the target, noting the others.
fn per_prosumer<T>(
    scenario: &Scenario,
    target: Target,
    mut each: impl FnMut(ConstraintRef) -> Result<T, GsaaError>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (prosumer, located) in locate_all(scenario, target) {
        match located {
            Ok(index) => out.push(each(ConstraintRef { prosumer, index })?),
            Err(GsaaError::Target(msg)) => println!("skipped: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        bail!(usage(format!("no prosumer has a {target} row")));
    }
    Ok(out)
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(usage(format!("--k must be finite and non-negative, got {k}")));
    }
    Ok(())
}

fn report(estimates: Vec<ShadowPriceEstimate>, a: &EstimateArgs) -> Result<()> {
    let ranking = rank(estimates, a.include_flagged);
    print!("{}", render_ranking(&ranking));
    if let Some(dir) = out_dir(&a.out)? {
        export::write_ranking(create(&dir, "estimates.csv")?, &ranking)?;
    }
    Ok(())
}

fn gsaa_quad(a: EstimateArgs) -> Result<()> {
    check_k(a.k)?;
    let scenario = load(&a.source)?;
    let estimates = match selection(&a.target, a.period, &scenario)? {
        Selection::Row(c) => vec![shadow_price_closed_form(&scenario, c)?],
        Selection::Named(target) => per_prosumer(&scenario, target, |c| match target {
            Target::EvDischarge { period } => shadow_price_ev(&scenario, c.prosumer, period),
            Target::NetSell { period } => shadow_price_net_sell(&scenario, c.prosumer, period),
            Target::AcUpper { period } => shadow_price_ac(&scenario, c.prosumer, period, None),
            Target::Row { .. } => unreachable!("rows are selected explicitly"),
        })?,
    };
    report(estimates.into_iter().map(|e| e.with_k(a.k)).collect(), &a)
}

fn gsaa_bounds(b: BoundsArgs) -> Result<()> {
    let a = &b.estimate;
    check_k(a.k)?;
    let scenario = load(&a.source)?;
    let bounds = match (selection(&a.target, a.period, &scenario)?, b.anchors) {
        (Selection::Row(c), anchors) => {
            let choice = match anchors {
                Anchors::Zero => AnchorChoice::Zero,
                Anchors::OperatingPoint => AnchorChoice::OperatingPoint,
            };
            vec![dual_bounds_for_target(&scenario, c.prosumer, Target::Row { index: c.index }, &choice)?]
        }
        (Selection::Named(target), Anchors::OperatingPoint) => per_prosumer(&scenario, target, |c| {
            dual_bounds_for_target(&scenario, c.prosumer, target, &AnchorChoice::OperatingPoint)
        })?,
        (Selection::Named(target), Anchors::Zero) => per_prosumer(&scenario, target, |c| match target {
            Target::EvDischarge { period } => bounds_ev(&scenario, c.prosumer, period),
            Target::NetSell { period } => bounds_net_sell(&scenario, c.prosumer, period),
            Target::AcUpper { period } => bounds_ac(&scenario, c.prosumer, period),
            Target::Row { .. } => unreachable!("rows are selected explicitly"),
        })?,
    };
    report(bounds.iter().map(|x| x.to_estimate(a.k)).collect(), a)
}

fn sweep(a: SweepArgs) -> Result<()> {
    if !(a.delta.is_finite() && a.delta > 0.0) {
        return Err(usage(format!("--delta must be positive, got {}", a.delta)));
    }
    if a.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let scenario = load(&a.source)?;
    let tables = match selection(&a.target, a.period, &scenario)? {
        Selection::Row(c) => vec![incremental_gsaa_sweep(&scenario, c, a.delta, a.steps)?],
        Selection::Named(target) => per_prosumer(&scenario, target, |c| incremental_gsaa_sweep(&scenario, c, a.delta, a.steps))?,
    };
    println!(
        "{:<9} {:<28} {:>6} {:>16} {:>16} {:>12}",
        "prosumer", "constraint", "steps", "cum. projected", "cum. realized", "min slack"
    );
    for t in &tables {
        let last = t.rows.last();
        let min_slack = t
            .rows
            .iter()
            .map(|r| r.cumulative_projected - r.cumulative_realized)
            .fold(f64::INFINITY, f64::min);
        println!(
            "{:<9} {:<28} {:>6} {:>16.9} {:>16.9} {:>12.3e}{}",
            t.constraint.prosumer,
            format!("{} ({})", t.constraint.index, t.origin),
            t.rows.len(),
            last.map_or(0.0, |r| r.cumulative_projected),
            last.map_or(0.0, |r| r.cumulative_realized),
            min_slack,
            if t.unbounded { "  stopped: unbounded" } else { "" }
        );
    }
    if let Some(dir) = out_dir(&a.out)? {
        export::write_sweeps(create(&dir, "sweep.csv")?, &tables)?;
    }
    Ok(())
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn case_study(a: CaseStudyArgs) -> Result<()> {
    check_k(a.k)?;
    if !(a.k_max.is_finite() && a.k_max > 0.0) || a.steps == 0 {
        return Err(usage("--k-max must be positive and --steps at least 1"));
    }
    if !(a.beta.is_finite() && a.beta > 0.0) {
        return Err(usage(format!("--beta must be positive, got {}", a.beta)));
    }
    let case = TwoEvCase {
        a_hat: a.a_hat,
        b_hat: a.b_hat,
        mu: a.mu,
        lipschitz: a.lipschitz,
        beta: a.beta,
        cost: a.cost,
        allowed_discharge: a.k,
    };
    let probe = gsaa_core::scenarios::two_prosumer_ev(&case);
    probe.validate().map_err(|e| usage(format!("invalid case parameters: {e}")))?;

    let cmp = beta_case_study(&case)?;
    println!("beta {}  x = -grad F_1(0) = {}  allowed discharge {}", cmp.beta, cmp.x, a.k);
    println!("f0 {:.6}  f1 {:.6}  f2 {:.6}  region {}", cmp.f0, cmp.f1, cmp.f2, cmp.region);
    println!(
        "prosumer 1 bounds [{:.6}, {:.6}] numeric {:.6}",
        cmp.bounds_k.lower, cmp.bounds_k.upper, cmp.lambda_k
    );
    println!(
        "prosumer 2 bounds [{:.6}, {:.6}] numeric {:.6}",
        cmp.bounds_l.lower, cmp.bounds_l.upper, cmp.lambda_l
    );
    if let Some(ok) = cmp.ordering_confirmed {
        println!("claimed ordering confirmed numerically: {ok}");
    }
    for d in &cmp.diagnostics {
        println!("note: {d}");
    }

    let ks = grid(0.0, a.k_max, a.steps);
    let rows = bounds_vs_discharge(&case, &ks)?;
    let n = ks.len();
    // pointwise: shadow-price bounds; cumulative: bounds on the welfare gained
    // by allowing K units of discharge
    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>10} {:>11} {:>11} {:>11} {:>11}  {:<11} cumulative",
        "K", "lower 1", "upper 1", "lower 2", "upper 2", "gain lo 1", "gain up 1", "gain lo 2", "gain up 2",
        "pointwise"
    );
    let verdict = |l1: f64, u1: f64, l2: f64, u2: f64| {
        if l1 > u2 {
            "1 ahead"
        } else if l2 > u1 {
            "2 ahead"
        } else {
            "indecisive"
        }
    };
    for i in 0..n {
        let (p1, p2) = (&rows[i], &rows[n + i]);
        let cumulative = if i == 0 {
            "-"
        } else {
            verdict(p1.cumulative_lower, p1.cumulative_upper, p2.cumulative_lower, p2.cumulative_upper)
        };
        println!(
            "{:>8.4} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>11.6} {:>11.6} {:>11.6} {:>11.6}  {:<11} {}",
            ks[i],
            p1.lower,
            p1.upper,
            p2.lower,
            p2.upper,
            p1.cumulative_lower,
            p1.cumulative_upper,
            p2.cumulative_lower,
            p2.cumulative_upper,
            verdict(p1.lower, p1.upper, p2.lower, p2.upper),
            cumulative
        );
    }

    if let Some(dir) = out_dir(&a.out)? {
        export::write_discharge_bounds(create(&dir, "bounds_vs_discharge.csv")?, &rows)?;
        let b_hats = grid(0.02, 0.6, 29);
        export::write_bhat_scan(create(&dir, "bhat_scan.csv")?, &bhat_scan(&case, &b_hats)?)?;
        let params = RegionParams {
            b0: a.cost,
            lipschitz: a.lipschitz,
            norm_qk: cmp.bounds_k.norm_q,
            norm_ql: cmp.bounds_l.norm_q,
        };
        let xs: Vec<f64> = grid(0.0, 1.0, 100).into_iter().skip(1).collect();
        let betas: Vec<f64> = grid(0.0, 5.0, 100).into_iter().skip(1).collect();
        export::write_region_grid(create(&dir, "region_grid.csv")?, &region_grid(&params, &xs, &betas))?;
        fs::write(dir.join("case_study.json"), serde_json::to_string_pretty(&cmp)?)?;
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let scenario = match (&a.preset, a.seed) {
        (Some(name), _) => preset(name).ok_or_else(|| usage(format!("unknown preset {name:?}; known: {PRESETS:?}")))?,
        (None, Some(seed)) => random_sec6(
            seed,
            match a.experiment {
                ExperimentArg::NetSell => Experiment::NetSell,
                ExperimentArg::Ev => Experiment::EvDischarge,
            },
        ),
        (None, None) => return Err(usage("gen needs --seed or --preset")),
    };
    let json = scenario.to_json();
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("scenario.json");
            fs::write(&path, json + "\n")?;
            println!("wrote {}", path.display());
        }
        None => {
            // a closed pipe (`gsaa gen ... | head`) is not an error
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{json}").and_then(|_| out.flush()) {
                Err(e) if e.kind() != ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}
