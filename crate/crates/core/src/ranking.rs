//! Ordering prosumers by the contribution potential of a resource capacity.
//!
//! Estimates sort by lower value, then upper value, then prosumer id, all
//! descending except the id. Intervals that intersect cannot be ordered and
//! are reported as indecisive.

use serde::{Deserialize, Serialize};

use crate::gsaa_quad::{ConstraintRef, ShadowPriceEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub estimate: ShadowPriceEstimate,
    /// Other ranked entries whose value range intersects this one.
    pub overlaps_with: Vec<ConstraintRef>,
}

impl RankedEntry {
    pub fn indecisive(&self) -> bool {
        !self.overlaps_with.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankedEntry>,
    /// Estimates left out because the tightness assumption failed.
    pub excluded: Vec<ShadowPriceEstimate>,
}

fn order(a: &ShadowPriceEstimate, b: &ShadowPriceEstimate) -> std::cmp::Ordering {
    b.value
        .lower()
        .total_cmp(&a.value.lower())
        .then(b.value.upper().total_cmp(&a.value.upper()))
        .then(a.constraint.cmp(&b.constraint))
}

fn intersects(a: &ShadowPriceEstimate, b: &ShadowPriceEstimate) -> bool {
    a.value.lower().max(b.value.lower()) <= a.value.upper().min(b.value.upper())
}

/// Ranks estimates; flagged ones are kept only with `include_flagged`.
pub fn rank(estimates: Vec<ShadowPriceEstimate>, include_flagged: bool) -> Ranking {
    let (mut kept, excluded): (Vec<_>, Vec<_>) = estimates
        .into_iter()
        .partition(|e| include_flagged || e.tightness_assumption_held);
    kept.sort_by(order);
    let entries = kept
        .iter()
        .enumerate()
        .map(|(i, e)| RankedEntry {
            rank: i + 1,
            estimate: e.clone(),
            overlaps_with: kept
                .iter()
                .enumerate()
                .filter(|&(k, o)| k != i && intersects(e, o))
                .map(|(_, o)| o.constraint)
                .collect(),
        })
        .collect();
    Ranking { entries, excluded }
}

/// Fixed-width text table of a ranking.
pub fn render_ranking(ranking: &Ranking) -> String {
    let mut out = format!(
        "{:<5} {:<9} {:<28} {:<26} {:<26} {}\n",
        "rank", "prosumer", "constraint", "estimate", "projection", "flags"
    );
    let line = |rank: String, e: &ShadowPriceEstimate, flags: Vec<&str>| {
        format!(
            "{:<5} {:<9} {:<28} {:<26} {:<26} {}\n",
            rank,
            e.constraint.prosumer,
            format!("{} ({})", e.constraint.index, e.origin),
            e.value.to_string(),
            format!("K={} -> {}", e.k_units, e.welfare_projection),
            if flags.is_empty() { "-".to_string() } else { flags.join(",") }
        )
    };
    for entry in &ranking.entries {
        let mut flags = Vec::new();
        if entry.indecisive() {
            flags.push("indecisive");
        }
        if !entry.estimate.tightness_assumption_held {
            flags.push("not-tight");
        }
        out += &line(entry.rank.to_string(), &entry.estimate, flags);
    }
    for e in &ranking.excluded {
        out += &line("-".into(), e, vec!["excluded:not-tight"]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsaa_quad::EstimateValue;
    use crate::model::ConstraintOrigin;

    fn est(prosumer: u32, value: EstimateValue, held: bool) -> ShadowPriceEstimate {
        ShadowPriceEstimate {
            constraint: ConstraintRef { prosumer, index: 0 },
            origin: ConstraintOrigin::NetBuying { period: 1 },
            value,
            unclamped: None,
            k_units: 1.0,
            welfare_projection: value,
            tightness_assumption_held: held,
            numeric_dual: None,
            warnings: vec![],
        }
    }

    fn exact(v: f64) -> EstimateValue {
        EstimateValue::Exact { value: v }
    }

    fn interval(l: f64, u: f64) -> EstimateValue {
        EstimateValue::Interval { lower: l, upper: u }
    }

    #[test]
    fn orders_by_lower_then_upper_then_id() {
        let r = rank(
            vec![
                est(3, interval(0.1, 0.5), true),
                est(1, interval(0.1, 0.4), true),
                est(2, interval(0.1, 0.5), true),
                est(4, interval(0.6, 0.7), true),
            ],
            false,
        );
        let ids: Vec<u32> = r.entries.iter().map(|e| e.estimate.constraint.prosumer).collect();
        assert_eq!(ids, [4, 2, 3, 1]);
        assert!(!r.entries[0].indecisive());
        assert!(r.entries[1].indecisive());
    }

    #[test]
    fn exact_values_with_distinct_values_are_decisive() {
        let r = rank(vec![est(2, exact(0.2), true), est(1, exact(0.3), true)], false);
        assert_eq!(r.entries[0].estimate.constraint.prosumer, 1);
        assert!(r.entries.iter().all(|e| !e.indecisive()));
    }

    #[test]
    fn flagged_estimates_are_excluded_by_default() {
        let all = vec![est(1, exact(0.9), false), est(2, exact(0.2), true)];
        let r = rank(all.clone(), false);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.excluded.len(), 1);
        assert!(render_ranking(&r).contains("excluded"));
        assert_eq!(rank(all, true).entries[0].estimate.constraint.prosumer, 1);
    }
}
