//! Planning toolkit for deploying quantum-repeater networks on existing
//! fiber infrastructure.
//!
//! Given a fiber graph, end nodes, and rate/fidelity/robustness/capacity
//! requirements, the pipeline derives hop and link-length bounds from a
//! repeater-chain model, builds candidate elementary links from shortest
//! fiber routes, formulates repeater placement as a binary ILP (path-based,
//! link-based, or generalized with per-pair parameters and a total-length
//! tiebreaker), solves it exactly, extracts the per-pair paths, and audits
//! the resulting deployment plan.

pub mod analysis;
pub mod error;
pub mod formulations;
pub mod ilp;
pub mod network;
pub mod planner;
pub mod randomnet;
pub mod requirements;
pub mod solver;

pub use error::{Error, Result};
