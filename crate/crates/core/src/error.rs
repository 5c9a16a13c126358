//! Error and infeasibility types shared across the crate.

use thiserror::Error;

/// Errors raised by network loading, model building and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("network document: {0}")]
    Schema(String),

    #[error("nonpositive fiber length {length} on fiber {a}-{b}")]
    NonpositiveLength { a: String, b: String, length: f64 },

    #[error("fiber endpoint '{0}' is not a declared node")]
    UnknownEndpoint(String),

    #[error("duplicate node id '{0}'")]
    DuplicateNode(String),

    #[error("network has {0} end nodes; at least 2 are required")]
    TooFewEndNodes(usize),

    #[error("requirement out of domain: {0}")]
    Domain(String),

    #[error("fidelity target unreachable: a single link of fidelity {f_link} cannot exceed {f_min}")]
    FidelityUnreachable { f_link: f64, f_min: f64 },

    #[error("rate bound falls below 1 km at integer granularity (continuous bound {continuous_km} km)")]
    RateBoundBelowOneKm { continuous_km: f64 },

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("duplicate variable '{0}'")]
    DuplicateVariable(String),

    #[error("assignment is not total: variable '{0}' has no value")]
    PartialAssignment(String),

    #[error("non-finite coefficient in {0}")]
    NonFiniteCoefficient(String),

    #[error("path catalog exceeds cap of {cap} paths (stopped at {reached})")]
    CatalogTooLarge { cap: usize, reached: usize },

    #[error("model exceeds size cap: {0} variables")]
    ModelTooLarge(usize),

    #[error("brute force supports at most {cap} variables, model has {nvars}")]
    BruteForceCap { cap: usize, nvars: usize },

    #[error("scale factor alpha={alpha} admits secondary objective up to {bound}, which reaches 1")]
    AlphaTooLarge { alpha: f64, bound: f64 },

    #[error("solver: {0}")]
    Solver(String),

    #[error("path extraction found a corrupt assignment: {0}")]
    CorruptAssignment(String),

    #[error("plan audit failed: {0}")]
    AuditFailure(String),

    #[error("infeasible at stage '{stage}': {detail}")]
    Infeasible { stage: String, detail: String },

    #[error("feasible network not found after {attempts} attempts")]
    AttemptsExhausted { attempts: u32 },

    #[error("convex hull is degenerate (all points collinear); regenerate with a new seed")]
    DegenerateHull,

    #[error("sweep value {value} for {param} is stricter than the base value {base}")]
    SweepValueStricter { param: String, value: f64, base: f64 },

    #[error("instance {instance} became infeasible at {param}={value}, which should be no stricter than the base")]
    SweepInfeasible { instance: u64, param: String, value: f64 },

    #[error("external solver: {0}")]
    External(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stage name for structured infeasibility reports, if this is one.
    pub fn infeasible_stage(&self) -> Option<&str> {
        match self {
            Error::Infeasible { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
