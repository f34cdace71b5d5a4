//! Slow, direct reference computations used to check `semiperc-core`.
//!
//! Nothing in the production crates depends on this crate.

pub mod integrate;
pub mod mcmc;

pub use integrate::{brute_force_integral, IntegrateError, MIN_POINTS};
pub use mcmc::{posterior_sample_overlap, McmcConfig, McmcError, McmcSummary};
