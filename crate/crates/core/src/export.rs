//! CSV tables for allocations, rankings, sweeps, bound scans and region grids.
//!
//! Floats are written in shortest round-trip form, so equal inputs give
//! byte-identical files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::equilibrium::{Allocation, ApplianceDemand, EquilibriumResult, ProsumerDemand};
use crate::error::ModelError;
use crate::gsaa_convex::{BhatScanRow, DischargeBoundsRow, RegionPoint};
use crate::gsaa_quad::SweepTable;
use crate::model::Scenario;
use crate::ranking::Ranking;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Content(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub prosumer: u32,
    pub appliance: String,
    pub period: usize,
    pub q: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRecord {
    pub period: usize,
    pub supply: f64,
}

pub fn write_allocation<W: Write>(w: W, result: &EquilibriumResult) -> Result<(), ExportError> {
    let mut out = writer(w);
    for d in &result.allocation.demand {
        for a in &d.appliances {
            for (t, &q) in a.q.iter().enumerate() {
                out.serialize(AllocationRecord {
                    prosumer: d.prosumer,
                    appliance: a.appliance.clone(),
                    period: t + 1,
                    q,
                    price: result.price[t],
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_supply<W: Write>(w: W, supply: &[f64]) -> Result<(), ExportError> {
    let mut out = writer(w);
    for (t, &s) in supply.iter().enumerate() {
        out.serialize(SupplyRecord { period: t + 1, supply: s })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an allocation table back into scenario order. Returns the
/// allocation (supply set to total demand) and the per-period price column.
pub fn read_allocation<R: Read>(r: R, scenario: &Scenario) -> Result<(Allocation, Vec<f64>), ExportError> {
    let h = scenario.horizon.periods();
    let mut demand: Vec<ProsumerDemand> = scenario
        .prosumers
        .iter()
        .map(|p| ProsumerDemand {
            prosumer: p.id,
            appliances: p
                .appliances
                .iter()
                .map(|a| ApplianceDemand {
                    appliance: a.id.clone(),
                    q: vec![f64::NAN; h],
                })
                .collect(),
        })
        .collect();
    let mut price = vec![f64::NAN; h];
    for rec in csv::Reader::from_reader(r).deserialize::<AllocationRecord>() {
        let rec = rec?;
        if rec.period == 0 || rec.period > h {
            return Err(ExportError::Content(format!("period {} outside 1..={h}", rec.period)));
        }
        let pi = scenario.prosumer_index(rec.prosumer)?;
        let ai = scenario.prosumers[pi]
            .appliance_index(&rec.appliance)
            .ok_or_else(|| ExportError::Content(format!("prosumer {} has no appliance {}", rec.prosumer, rec.appliance)))?;
        demand[pi].appliances[ai].q[rec.period - 1] = rec.q;
        let t = rec.period - 1;
        if price[t].is_nan() {
            price[t] = rec.price;
        } else if price[t] != rec.price {
            return Err(ExportError::Content(format!("conflicting prices at period {}", rec.period)));
        }
    }
    for d in &demand {
        for a in &d.appliances {
            if let Some(t) = a.q.iter().position(|v| v.is_nan()) {
                return Err(ExportError::Content(format!(
                    "missing q for prosumer {} appliance {} period {}",
                    d.prosumer,
                    a.appliance,
                    t + 1
                )));
            }
        }
    }
    if let Some(t) = price.iter().position(|v| v.is_nan()) {
        return Err(ExportError::Content(format!("missing price for period {}", t + 1)));
    }
    let mut alloc = Allocation { demand, supply: vec![] };
    alloc.supply = alloc.total_demand(h);
    Ok((alloc, price))
}

pub fn read_supply<R: Read>(r: R, horizon: usize) -> Result<Vec<f64>, ExportError> {
    let mut supply = vec![f64::NAN; horizon];
    for rec in csv::Reader::from_reader(r).deserialize::<SupplyRecord>() {
        let rec = rec?;
        if rec.period == 0 || rec.period > horizon {
            return Err(ExportError::Content(format!("period {} outside 1..={horizon}", rec.period)));
        }
        supply[rec.period - 1] = rec.supply;
    }
    if let Some(t) = supply.iter().position(|v| v.is_nan()) {
        return Err(ExportError::Content(format!("missing supply for period {}", t + 1)));
    }
    Ok(supply)
}

#[derive(Serialize)]
struct EstimateRecord {
    rank: String,
    prosumer: u32,
    constraint: usize,
    origin: String,
    lower: f64,
    upper: f64,
    k: f64,
    projection_lower: f64,
    projection_upper: f64,
    numeric_dual: Option<f64>,
    tightness_held: bool,
    indecisive: bool,
}

pub fn write_ranking<W: Write>(w: W, ranking: &Ranking) -> Result<(), ExportError> {
    let mut out = writer(w);
    let ranked = ranking.entries.iter().map(|e| (e.rank.to_string(), &e.estimate, e.indecisive()));
    let excluded = ranking.excluded.iter().map(|e| ("excluded".to_string(), e, false));
    for (rank, e, indecisive) in ranked.chain(excluded) {
        out.serialize(EstimateRecord {
            rank,
            prosumer: e.constraint.prosumer,
            constraint: e.constraint.index,
            origin: e.origin.to_string(),
            lower: e.value.lower(),
            upper: e.value.upper(),
            k: e.k_units,
            projection_lower: e.welfare_projection.lower(),
            projection_upper: e.welfare_projection.upper(),
            numeric_dual: e.numeric_dual,
            tightness_held: e.tightness_assumption_held,
            indecisive,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRecord {
    prosumer: u32,
    constraint: usize,
    origin: String,
    step: usize,
    capacity: f64,
    estimate_lower: f64,
    estimate_upper: f64,
    numeric_dual: f64,
    projected_gain: f64,
    realized_gain: f64,
    cumulative_projected: f64,
    cumulative_realized: f64,
    tightness_held: bool,
}

/// Several sweeps in one table, one block per constraint.
pub fn write_sweeps<W: Write>(w: W, tables: &[SweepTable]) -> Result<(), ExportError> {
    let mut out = writer(w);
    for t in tables {
        for r in &t.rows {
            out.serialize(SweepRecord {
                prosumer: t.constraint.prosumer,
                constraint: t.constraint.index,
                origin: t.origin.to_string(),
                step: r.step,
                capacity: r.capacity,
                estimate_lower: r.estimate_lower,
                estimate_upper: r.estimate_upper,
                numeric_dual: r.numeric_dual,
                projected_gain: r.projected_gain,
                realized_gain: r.realized_gain,
                cumulative_projected: r.cumulative_projected,
                cumulative_realized: r.cumulative_realized,
                tightness_held: r.tightness_held,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), ExportError> {
    let mut out = writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_discharge_bounds<W: Write>(w: W, rows: &[DischargeBoundsRow]) -> Result<(), ExportError> {
    write_rows(w, rows)
}

pub fn write_bhat_scan<W: Write>(w: W, rows: &[BhatScanRow]) -> Result<(), ExportError> {
    write_rows(w, rows)
}

#[derive(Serialize)]
struct RegionRecord {
    x: f64,
    beta: f64,
    f0: f64,
    f1: f64,
    f2: f64,
    region: String,
}

pub fn write_region_grid<W: Write>(w: W, points: &[RegionPoint]) -> Result<(), ExportError> {
    let mut out = writer(w);
    for p in points {
        out.serialize(RegionRecord {
            x: p.x,
            beta: p.beta,
            f0: p.f0,
            f1: p.f1,
            f2: p.f2,
            region: p.region.to_string(),
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_dso;
    use crate::scenarios::{paper_sec6, Experiment};

    #[test]
    fn allocation_round_trips() {
        let s = paper_sec6(Experiment::EvDischarge);
        let res = solve_dso(&s).unwrap();
        let mut buf = Vec::new();
        write_allocation(&mut buf, &res).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("prosumer,appliance,period,q,price\n"));
        let (alloc, price) = read_allocation(buf.as_slice(), &s).unwrap();
        assert_eq!(alloc, res.allocation);
        assert_eq!(price, res.price);
        let mut sup = Vec::new();
        write_supply(&mut sup, &res.allocation.supply).unwrap();
        assert_eq!(read_supply(sup.as_slice(), 24).unwrap(), res.allocation.supply);
    }

    #[test]
    fn incomplete_allocation_is_rejected() {
        let s = paper_sec6(Experiment::EvDischarge);
        let text = "prosumer,appliance,period,q,price\n1,EV,1,0.5,0.4\n";
        assert!(matches!(read_allocation(text.as_bytes(), &s), Err(ExportError::Content(_))));
        let bad = "prosumer,appliance,period,q,price\n1,XX,1,0.5,0.4\n";
        assert!(read_allocation(bad.as_bytes(), &s).is_err());
    }
}
