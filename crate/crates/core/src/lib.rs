//! Cache-size allocation for multi-cluster multicast wireless backhaul.
//!
//! The crate maximizes the expected downloading sum-rate of a cloud-RAN
//! backhaul where clusters of base stations each receive one multicast stream
//! and pre-store a prefix of the requested file. The solver is a successive
//! convex approximation whose subproblems are solved in the dual with an
//! accelerated projected-gradient method.
//!
//! Rates are in nats internally; reports convert to bits.

pub mod channels;
pub mod config;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod formulation;
pub mod linalg;
pub mod model;
pub mod sca;
pub mod surrogate;
pub mod verify;

pub use config::ProblemConfig;
pub use error::{Error, Result};
pub use model::{InterferenceModel, PrimalState, RateReport};
