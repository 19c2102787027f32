//! Two prosumers with one EV each over a single period, where prosumer `l`'s
//! utility is `beta` times prosumer `k`'s. Which one should get discharge
//! capacity first depends on `beta` and on `x = -grad F_k(0)` through
//!
//! ```text
//! f0 = b_0 / x
//! f1 = (x + L |q_k|) / (x - L |q_l|)
//! f2 = (x + L |q_k| - 2 b_0) / (-x - L |q_l|)
//! ```
//!
//! `1 < f1 < beta < f0` means `k` dominates; `beta < f2 < f0 <= 1` means `l` does.

use serde::{Deserialize, Serialize};

use super::{bounds_ev, DualBounds};
use crate::error::GsaaError;
use crate::scenarios::{two_prosumer_ev, TwoEvCase};

/// Distance to a region boundary below which no side is claimed.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `beta > 1` chain holds: prosumer `k` has the larger shadow price.
    KDominates,
    /// `beta < 1` chain holds: prosumer `l` has the larger shadow price.
    LDominates,
    Indecisive,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::KDominates => "k_dominates",
            Region::LDominates => "l_dominates",
            Region::Indecisive => "indecisive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub b0: f64,
    pub lipschitz: f64,
    pub norm_qk: f64,
    pub norm_ql: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionValues {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
}

pub fn region_functions(params: &RegionParams, x: f64) -> RegionValues {
    let lk = params.lipschitz * params.norm_qk;
    let ll = params.lipschitz * params.norm_ql;
    RegionValues {
        f0: params.b0 / x,
        f1: (x + lk) / (x - ll),
        f2: (x + lk - 2.0 * params.b0) / (-x - ll),
    }
}

fn strictly_below(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && b - a > BOUNDARY_TOL
}

pub fn classify_values(v: &RegionValues, beta: f64) -> Region {
    if strictly_below(1.0, v.f1) && strictly_below(v.f1, beta) && strictly_below(beta, v.f0) {
        Region::KDominates
    } else if strictly_below(beta, v.f2) && strictly_below(v.f2, v.f0) && v.f0 <= 1.0 {
        Region::LDominates
    } else {
        Region::Indecisive
    }
}

pub fn classify_region(params: &RegionParams, x: f64, beta: f64) -> Region {
    if !(x > 0.0) {
        return Region::Indecisive;
    }
    classify_values(&region_functions(params, x), beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub x: f64,
    pub beta: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub region: Region,
}

/// Region labels over the product grid, `x` outer.
pub fn region_grid(params: &RegionParams, xs: &[f64], betas: &[f64]) -> Vec<RegionPoint> {
    xs.iter()
        .flat_map(|&x| {
            let v = region_functions(params, x);
            betas.iter().map(move |&beta| RegionPoint {
                x,
                beta,
                f0: v.f0,
                f1: v.f1,
                f2: v.f2,
                region: if x > 0.0 { classify_values(&v, beta) } else { Region::Indecisive },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaComparison {
    pub beta: f64,
    /// `-grad F_k(0)`.
    pub x: f64,
    pub region: Region,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub lambda_k: f64,
    pub lambda_l: f64,
    pub bounds_k: DualBounds,
    pub bounds_l: DualBounds,
    /// Whether the numeric multipliers order as the region claims; `None`
    /// when no ordering is claimed.
    pub ordering_confirmed: Option<bool>,
    pub diagnostics: Vec<String>,
}

/// Classifies `case` and checks the claim against numeric multipliers.
/// Prosumer 1 plays `k`, prosumer 2 (scaled by `beta`) plays `l`.
pub fn beta_case_study(case: &TwoEvCase) -> Result<BetaComparison, GsaaError> {
    let scenario = two_prosumer_ev(case);
    let bk = bounds_ev(&scenario, 1, 1)?;
    let bl = bounds_ev(&scenario, 2, 1)?;
    // F_k = -(a q^2 + b q), so -grad F_k(0) = b_hat
    let x = case.b_hat;
    let params = RegionParams {
        b0: case.cost,
        lipschitz: case.lipschitz,
        norm_qk: bk.norm_q,
        norm_ql: bl.norm_q,
    };
    let v = region_functions(&params, x);
    let mut diagnostics = Vec::new();
    let mut blocked = false;
    for (name, b) in [("k", &bk), ("l", &bl)] {
        if b.coupled_rows_bind {
            blocked = true;
            diagnostics.push(format!("prosumer {name}: another row binds on the discharge columns"));
        } else if !b.tightness_held {
            // a slack discharge limit simply has multiplier zero
            diagnostics.push(format!("prosumer {name}: discharge limit is slack"));
        }
    }
    if !(x > 0.0) {
        blocked = true;
        diagnostics.push(format!("initial utility increasing rate {x} is not positive"));
    }
    let region = if !blocked {
        classify_values(&v, case.beta)
    } else {
        Region::Indecisive
    };
    let (lk, ll) = (bk.lambda_numeric, bl.lambda_numeric);
    let ordering_confirmed = match region {
        Region::KDominates => Some(lk > ll),
        Region::LDominates => Some(ll > lk),
        Region::Indecisive => None,
    };
    Ok(BetaComparison {
        beta: case.beta,
        x,
        region,
        f0: v.f0,
        f1: v.f1,
        f2: v.f2,
        lambda_k: lk,
        lambda_l: ll,
        bounds_k: bk,
        bounds_l: bl,
        ordering_confirmed,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargeBoundsRow {
    pub prosumer: u32,
    pub allowed_discharge: f64,
    pub lower: f64,
    pub upper: f64,
    pub lambda_numeric: f64,
    /// Integrals from the first grid point, by the trapezoid rule: bounds on
    /// the welfare gained by allowing this much discharge.
    pub cumulative_lower: f64,
    pub cumulative_upper: f64,
    pub cumulative_numeric: f64,
    pub tightness_held: bool,
}

/// EV bounds of both prosumers across allowed-discharge amounts (ascending).
pub fn bounds_vs_discharge(case: &TwoEvCase, discharges: &[f64]) -> Result<Vec<DischargeBoundsRow>, GsaaError> {
    if discharges.windows(2).any(|w| !(w[0] < w[1])) || discharges.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(GsaaError::Target("discharge amounts must be finite, non-negative and increasing".into()));
    }
    let mut per_k = Vec::with_capacity(discharges.len());
    for &k in discharges {
        let s = two_prosumer_ev(&TwoEvCase {
            allowed_discharge: k,
            ..*case
        });
        per_k.push([bounds_ev(&s, 1, 1)?, bounds_ev(&s, 2, 1)?]);
    }
    let mut rows = Vec::with_capacity(2 * discharges.len());
    for (slot, prosumer) in [1u32, 2].into_iter().enumerate() {
        let (mut cl, mut cu, mut cn) = (0.0, 0.0, 0.0);
        for (i, &k) in discharges.iter().enumerate() {
            let b = &per_k[i][slot];
            if i > 0 {
                let prev = &per_k[i - 1][slot];
                let w = 0.5 * (k - discharges[i - 1]);
                cl += w * (prev.lower + b.lower);
                cu += w * (prev.upper + b.upper);
                cn += w * (prev.lambda_numeric + b.lambda_numeric);
            }
            rows.push(DischargeBoundsRow {
                prosumer,
                allowed_discharge: k,
                lower: b.lower,
                upper: b.upper,
                lambda_numeric: b.lambda_numeric,
                cumulative_lower: cl,
                cumulative_upper: cu,
                cumulative_numeric: cn,
                tightness_held: b.tightness_held,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhatScanRow {
    pub b_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub lambda_numeric: f64,
    pub tightness_held: bool,
}

/// Prosumer 1's EV bounds as its first-order coefficient varies.
pub fn bhat_scan(case: &TwoEvCase, b_hats: &[f64]) -> Result<Vec<BhatScanRow>, GsaaError> {
    b_hats
        .iter()
        .map(|&b_hat| {
            let s = two_prosumer_ev(&TwoEvCase { b_hat, ..*case });
            let b = bounds_ev(&s, 1, 1)?;
            Ok(BhatScanRow {
                b_hat,
                lower: b.lower,
                upper: b.upper,
                lambda_numeric: b.lambda_numeric,
                tightness_held: b.tightness_held,
            })
        })
        .collect()
}
