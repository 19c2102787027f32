use thiserror::Error;

/// Structural problems found while building or validating a scenario.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("horizon must contain at least one period")]
    EmptyHorizon,
    #[error("{field}: expected {expected} entries, found {found}")]
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("{context}: period {period} is outside 1..={horizon}")]
    UnknownPeriod {
        context: String,
        period: usize,
        horizon: usize,
    },
    #[error("{context}: period {period} listed twice")]
    DuplicatePeriod { context: String, period: usize },
    #[error("{context}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds {
        context: String,
        lower: f64,
        upper: f64,
    },
    #[error("{context}: every coefficient is zero")]
    DegenerateRow { context: String },
    #[error("{context}: non-finite value")]
    NonFinite { context: String },
    #[error("prosumer {prosumer}: simple buyers cannot have negative power lower bounds (appliance {appliance}, period {period})")]
    SimpleBuyerDischarge {
        prosumer: u32,
        appliance: String,
        period: usize,
    },
    #[error("prosumer {0} is listed more than once")]
    DuplicateProsumer(u32),
    #[error("prosumer {prosumer}: appliance id {appliance} is listed more than once")]
    DuplicateAppliance { prosumer: u32, appliance: String },
    #[error("prosumer {prosumer}: appliance {appliance} not found")]
    UnknownAppliance { prosumer: u32, appliance: String },
    #[error("prosumer {0} not found")]
    UnknownProsumer(u32),
    #[error("prosumer {prosumer}: constraint index {index} out of range ({rows} rows)")]
    UnknownConstraint {
        prosumer: u32,
        index: usize,
        rows: usize,
    },
    #[error("inflexible appliance {0} cannot carry energy windows")]
    InflexibleWindow(String),
    #[error("{0}")]
    Setting(String),
    #[error("utility cost must be non-negative, found {value} at period {period}")]
    NegativeCost { period: usize, value: f64 },
    #[error("coefficient check failed: {0}")]
    Coefficients(String),
    #[error("invalid curvature bounds: {0}")]
    CurvatureBounds(String),
}

/// Failures that prevent a solver from even starting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("curvature entry {index} is {value}; strict concavity needs a negative value")]
    NotStrictlyConcave { index: usize, value: f64 },
    #[error("invalid curvature constants: {0}")]
    InvalidConstants(String),
    #[error("objective oracle violates its declared curvature: {0}")]
    OracleCurvature(String),
    #[error("brute-force oracle refuses {0} rows (limit 20)")]
    TooManyRows(usize),
    #[error("non-finite problem data: {0}")]
    NonFinite(String),
}

/// Errors surfaced by the market, equilibrium and sensitivity layers.
#[derive(Debug, Error)]
pub enum GsaaError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("prosumer {prosumer} has an infeasible problem (max violation {max_violation:.3e})")]
    Infeasible { prosumer: u32, max_violation: f64 },
    #[error("prosumer {prosumer}: solver stopped at the iteration cap (kkt {residual:.3e})")]
    NotConverged { prosumer: u32, residual: f64 },
    #[error("{0}")]
    Target(String),
}

impl GsaaError {
    /// True for errors that mean "the scenario has no feasible point".
    pub fn is_infeasible(&self) -> bool {
        matches!(self, GsaaError::Infeasible { .. })
    }
}
