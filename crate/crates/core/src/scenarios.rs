//! Preset and randomly generated scenarios.
//!
//! The `paper-sec6-*` presets use fixed coefficient draws: two prosumers with
//! a storage unit and an EV each, constant coefficients over 24 periods and a
//! constant utility cost of 0.4. Random generators are seeded and portable
//! (ChaCha8), so a seed always reproduces the same scenario.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    Appliance, ApplianceKind, Behavior, CurvatureBounds, EnergyWindow, Horizon, NetUtility, Prosumer,
    QuadraticNetUtility, Scenario, Setting, UtilityCompany,
};
use crate::solver::{ConstraintMatrix, QpProblem, SparseRow};

/// Which single resource capacity a section-6 style experiment studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Net buyers; the studied row is net buying at period 1.
    NetSell,
    /// Net sellers whose EV may not discharge at period 1.
    EvDischarge,
}

pub const PRESETS: &[&str] = &["paper-sec6-net-sell", "paper-sec6-ev", "paper-sec6-convex"];

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "paper-sec6-net-sell" => Some(paper_sec6(Experiment::NetSell)),
        "paper-sec6-ev" => Some(paper_sec6(Experiment::EvDischarge)),
        "paper-sec6-convex" => Some(paper_sec6_convex(2.0, 0.0)),
        _ => None,
    }
}

struct Sec6Draw {
    es_a: [f64; 2],
    ev_a: [f64; 2],
    ev_b: [f64; 2],
    cost: f64,
}

const PAPER_DRAW: Sec6Draw = Sec6Draw {
    es_a: [-0.02, -0.035],
    ev_a: [-0.01, -0.015],
    ev_b: [0.1, 0.2],
    cost: 0.4,
};

const SEC6_HORIZON: usize = 24;

fn sec6_scenario(draw: &Sec6Draw, experiment: Experiment) -> Scenario {
    let h = SEC6_HORIZON;
    let prosumers = (0..2)
        .map(|i| {
            let es = Appliance {
                id: "ES".into(),
                kind: ApplianceKind::Storage,
                q_lower: None,
                q_upper: None,
                energy_windows: vec![],
                net_utility: NetUtility::quadratic(vec![draw.es_a[i]; h], vec![0.0; h]),
            };
            let mut ev = Appliance {
                id: "EV".into(),
                kind: ApplianceKind::Ev,
                q_lower: None,
                q_upper: None,
                energy_windows: vec![],
                net_utility: NetUtility::quadratic(vec![draw.ev_a[i]; h], vec![draw.ev_b[i]; h]),
            };
            let behavior = match experiment {
                Experiment::NetSell => Behavior::NetBuyer,
                Experiment::EvDischarge => {
                    let mut lower = vec![None; h];
                    lower[0] = Some(0.0);
                    ev.q_lower = Some(lower);
                    Behavior::NetSeller
                }
            };
            Prosumer {
                id: i as u32 + 1,
                behavior,
                appliances: vec![es, ev],
                curvature: None,
            }
        })
        .collect();
    Scenario {
        horizon: Horizon::new(h).expect("positive"),
        setting: Setting::Quadratic,
        utility: UtilityCompany { cost: vec![draw.cost; h] },
        prosumers,
    }
}

/// Fixed-draw section-6 quadratic scenario.
pub fn paper_sec6(experiment: Experiment) -> Scenario {
    sec6_scenario(&PAPER_DRAW, experiment)
}

/// Section-6 style scenario with coefficients drawn from the stated ranges.
pub fn random_sec6(seed: u64, experiment: Experiment) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..=hi);
    loop {
        let draw = Sec6Draw {
            es_a: [u(-0.05, -0.02), u(-0.05, -0.02)],
            ev_a: [u(-0.04, -0.01), u(-0.04, -0.01)],
            ev_b: [u(0.1, 0.5), u(0.1, 0.5)],
            cost: u(0.2, 0.6),
        };
        if studied_row_binds(&draw, experiment) {
            return sec6_scenario(&draw, experiment);
        }
    }
}

/// Whether the unconstrained optimum of every prosumer violates the studied
/// row, so that it binds with a positive multiplier.
fn studied_row_binds(draw: &Sec6Draw, experiment: Experiment) -> bool {
    (0..2).all(|i| {
        let ev = (draw.cost - draw.ev_b[i]) / (2.0 * draw.ev_a[i]);
        match experiment {
            Experiment::EvDischarge => ev < 0.0,
            Experiment::NetSell => ev + draw.cost / (2.0 * draw.es_a[i]) < 0.0,
        }
    })
}

/// One-period, one-EV-per-prosumer convex scenario: prosumer 2's utility is
/// prosumer 1's scaled by `beta`, and each EV may discharge at most
/// `allowed_discharge` units.
pub fn paper_sec6_convex(beta: f64, allowed_discharge: f64) -> Scenario {
    two_prosumer_ev(&TwoEvCase {
        a_hat: -0.01,
        b_hat: 0.1,
        mu: 0.018,
        lipschitz: 0.022,
        beta,
        cost: 0.4,
        allowed_discharge,
    })
}

/// Parameters of the two-prosumer single-EV comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoEvCase {
    /// Prosumer 1's second-order coefficient (negative).
    pub a_hat: f64,
    /// Prosumer 1's first-order coefficient, equal to its marginal utility at zero.
    pub b_hat: f64,
    pub mu: f64,
    pub lipschitz: f64,
    /// Prosumer 2's utility is `beta` times prosumer 1's.
    pub beta: f64,
    pub cost: f64,
    pub allowed_discharge: f64,
}

pub fn two_prosumer_ev(case: &TwoEvCase) -> Scenario {
    let make = |id: u32, scale: f64| Prosumer {
        id,
        behavior: Behavior::NetSeller,
        appliances: vec![Appliance {
            id: "EV".into(),
            kind: ApplianceKind::Ev,
            q_lower: Some(vec![Some(0.0 - case.allowed_discharge)]),
            q_upper: None,
            energy_windows: vec![],
            net_utility: NetUtility::quadratic(vec![scale * case.a_hat], vec![scale * case.b_hat]),
        }],
        curvature: Some(CurvatureBounds {
            mu: scale * case.mu,
            lipschitz: scale * case.lipschitz,
        }),
    };
    Scenario {
        horizon: Horizon::new(1).expect("positive"),
        setting: Setting::GeneralConvex,
        utility: UtilityCompany { cost: vec![case.cost] },
        prosumers: vec![make(1, 1.0), make(2, case.beta)],
    }
}

/// Size limits for [`random_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomScenarioConfig {
    pub max_horizon: usize,
    pub max_prosumers: usize,
    pub max_appliances: usize,
    pub setting: Setting,
}

impl Default for RandomScenarioConfig {
    fn default() -> Self {
        RandomScenarioConfig {
            max_horizon: 24,
            max_prosumers: 3,
            max_appliances: 3,
            setting: Setting::Quadratic,
        }
    }
}

/// Random scenario that is feasible by construction: every requirement is
/// built around a reference consumption profile that satisfies it.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, config: &RandomScenarioConfig) -> Scenario {
    let h = rng.gen_range(1..=config.max_horizon.max(1));
    let cost: Vec<f64> = (0..h).map(|_| rng.gen_range(0.1..0.6)).collect();
    let n = rng.gen_range(1..=config.max_prosumers.max(1));
    let convex = config.setting == Setting::GeneralConvex;
    let prosumers = (0..n)
        .map(|i| {
            let n_app = rng.gen_range(1..=config.max_appliances.max(1));
            let mut behavior = *[Behavior::SimpleBuyer, Behavior::NetBuyer, Behavior::NetSeller]
                .choose(rng)
                .expect("non-empty");
            if behavior == Behavior::NetBuyer && n_app < 2 {
                // a single-appliance net-buying row would duplicate a bound
                behavior = Behavior::NetSeller;
            }
            let kinds: &[ApplianceKind] = if convex {
                &[ApplianceKind::Inflexible, ApplianceKind::ThermostatLike, ApplianceKind::Ev]
            } else {
                &[
                    ApplianceKind::Inflexible,
                    ApplianceKind::ThermostatLike,
                    ApplianceKind::Ev,
                    ApplianceKind::Storage,
                ]
            };
            let appliances: Vec<Appliance> = (0..n_app)
                .map(|k| {
                    let kind = *kinds.choose(rng).expect("kinds");
                    random_appliance(rng, format!("A{}", k + 1), kind, h, behavior)
                })
                .collect();
            let mut p = Prosumer {
                id: i as u32 + 1,
                behavior,
                appliances,
                curvature: None,
            };
            if convex {
                p.curvature = Some(p.implied_curvature(Horizon::new(h).expect("positive")));
            }
            p
        })
        .collect();
    Scenario {
        horizon: Horizon::new(h).expect("positive"),
        setting: config.setting,
        utility: UtilityCompany { cost },
        prosumers,
    }
}

fn random_appliance<R: Rng + ?Sized>(rng: &mut R, id: String, kind: ApplianceKind, h: usize, behavior: Behavior) -> Appliance {
    let a_hat: Vec<f64> = (0..h).map(|_| rng.gen_range(-0.2..-0.01)).collect();
    let b_hat: Vec<f64> = (0..h)
        .map(|_| if kind == ApplianceKind::Storage { 0.0 } else { rng.gen_range(0.05..0.8) })
        .collect();
    let c_hat = (kind == ApplianceKind::ThermostatLike).then(|| (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut lower = Vec::with_capacity(h);
    let mut upper = Vec::with_capacity(h);
    let mut reference = Vec::with_capacity(h);
    for _ in 0..h {
        let (mut lo, hi): (f64, f64) = match kind {
            ApplianceKind::Inflexible | ApplianceKind::ThermostatLike => {
                let lo = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..1.0) };
                (lo, lo + rng.gen_range(0.5..10.0))
            }
            ApplianceKind::Ev => {
                let lo = if rng.gen_bool(0.5) { 0.0 } else { -rng.gen_range(0.0..3.0) };
                (lo, rng.gen_range(1.0..10.0))
            }
            ApplianceKind::Storage => (-rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)),
        };
        if behavior == Behavior::SimpleBuyer {
            lo = lo.max(0.0);
        }
        let keep_lo = behavior == Behavior::SimpleBuyer || rng.gen_bool(0.7);
        let keep_hi = rng.gen_bool(0.7);
        // net buyers keep a non-negative reference so sum over appliances >= 0
        let ref_lo = if behavior == Behavior::NetBuyer { lo.max(0.0) } else { lo };
        reference.push(rng.gen_range(ref_lo..=hi));
        lower.push(keep_lo.then_some(lo));
        upper.push(keep_hi.then_some(hi));
    }
    let mut energy_windows = Vec::new();
    if kind != ApplianceKind::Inflexible && h >= 2 && rng.gen_bool(0.5) {
        let start = rng.gen_range(0..h - 1);
        let end = rng.gen_range(start + 1..h);
        let periods: Vec<usize> = (start + 1..=end + 1).collect();
        let alpha: Vec<f64> = periods
            .iter()
            .map(|_| {
                if kind == ApplianceKind::ThermostatLike {
                    -rng.gen_range(0.2..1.0)
                } else {
                    rng.gen_range(0.5..1.5)
                }
            })
            .collect();
        let level: f64 = periods.iter().zip(&alpha).map(|(&t, a)| a * reference[t - 1]).sum();
        let (mut has_lo, has_hi) = (rng.gen_bool(0.6), rng.gen_bool(0.6));
        if !has_lo && !has_hi {
            has_lo = true;
        }
        energy_windows.push(EnergyWindow {
            periods,
            alpha,
            energy_lower: has_lo.then(|| level - rng.gen_range(0.0..3.0)),
            energy_upper: has_hi.then(|| level + rng.gen_range(0.0..3.0)),
        });
    }
    Appliance {
        id,
        kind,
        q_lower: Some(lower),
        q_upper: Some(upper),
        energy_windows,
        net_utility: NetUtility::Quadratic(QuadraticNetUtility { a_hat, b_hat, c_hat }),
    }
}

/// Random feasible QP with `1..=max_vars` variables and `0..=max_rows` rows.
/// Some rows are made active at a reference point so degenerate and binding
/// cases both occur.
pub fn random_qp<R: Rng + ?Sized>(rng: &mut R, max_vars: usize, max_rows: usize) -> QpProblem {
    let n = rng.gen_range(1..=max_vars.max(1));
    let m = rng.gen_range(0..=max_rows);
    let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows = (0..m)
        .map(|_| {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for c in 0..n {
                if rng.gen_bool(0.5) {
                    let mag = rng.gen_range(0.1..1.0);
                    entries.push((c, if rng.gen_bool(0.5) { mag } else { -mag }));
                }
            }
            if entries.is_empty() {
                entries.push((rng.gen_range(0..n), if rng.gen_bool(0.5) { 1.0 } else { -1.0 }));
            }
            let at_ref: f64 = entries.iter().map(|&(c, a)| a * reference[c]).sum();
            let slack = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
            SparseRow::new(entries, at_ref + slack)
        })
        .collect();
    QpProblem::new(
        (0..n).map(|_| -rng.gen_range(0.1..2.0)).collect(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ConstraintMatrix::new(n, rows),
    )
}
