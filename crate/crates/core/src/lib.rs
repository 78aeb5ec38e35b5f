//! Distortion risk measures and optimal risk allocation.
//!
//! The crate computes distortion risk measures in both the quantile-integral
//! and Choquet forms, solves the n-agent co-monotone risk allocation problem
//! in closed form (bang-bang marginal allocations driven by a level-space
//! selector), checks boundedness of the unconstrained allocation problem on
//! finite probability spaces via dual scenario sets, and ships independent
//! brute-force and Monte Carlo verification oracles.
//!
//! Hot loops (assignment enumeration, certificate search, bootstrap
//! resampling) run data-parallel on rayon by default; build with
//! `--no-default-features` for the sequential fallback. Results are
//! identical in both modes.

pub mod allocation;
pub mod distortion;
pub mod distributions;
pub mod duality;
pub mod error;
pub mod oracles;

mod exec;

pub use error::{Result, RiskError};
