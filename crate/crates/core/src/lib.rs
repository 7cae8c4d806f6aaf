//! Bayesian routing games with private recommendation policies.
//!
//! The crate covers the full pipeline for a single origin-destination pair:
//! a directed multigraph with enumerated paths ([`network`]), a finite
//! weighted set of network states with affine link delays ([`scenarios`]),
//! full-information and Bayesian user equilibria ([`equilibrium`]), design of
//! obedient recommendation policies ([`design`]), and the closed-form results
//! available for two parallel affine links ([`twolink`]).

pub mod design;
pub mod equilibrium;
mod error;
pub mod network;
pub mod scenarios;
pub mod solver;
pub mod twolink;

pub use error::{Error, Result};
