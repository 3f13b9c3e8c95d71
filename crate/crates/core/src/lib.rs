//! Utility-maximizing reuse of cellular uplink channels by D2D pairs.
//!
//! The pipeline for one drop is
//! [`scenario::generate_topology`] → [`scenario::compute_link_gains`] →
//! [`baseline::waterfill_bandwidth`] → [`baseline::build_rate_table`] →
//! a solver ([`dual::solve_distributed`], [`reference::solve_centralized_relaxed`]
//! or [`reference::solve_binary_oracle`]) → [`dual::evaluate_allocation`].
//! [`harness`] runs that pipeline over many seeded drops.

pub mod baseline;
pub mod dual;
pub mod error;
pub mod harness;
pub mod model;
pub mod reference;
pub mod scenario;

pub use error::{Error, Result};
