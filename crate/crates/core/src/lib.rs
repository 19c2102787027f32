//! Demand-response market toolkit: market model, competitive equilibrium
//! solver, and shadow-price based sensitivity analysis of prosumer resource
//! capacities.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod model;
pub mod ranking;
pub mod equilibrium;
pub mod gsaa_convex;
pub mod gsaa_quad;
pub mod scenarios;
pub mod solver;
pub mod targets;
