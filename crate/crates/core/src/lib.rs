//! Sharp conditional tail approximations for randomly weighted sums.
//!
//! Given a realized weight sequence `W = (W_1, …, W_n)` and i.i.d. summands
//! `Z_j`, the crate approximates `P(S_n ≥ an | W)` for `S_n = Σ W_j Z_j` by the
//! strong large deviation formula
//!
//! ```text
//! P(S_n ≥ an | W) ≈ exp(−n I_n(a)) / (θ_n σ_n √(2πn))
//! ```
//!
//! and checks it against tilted Monte Carlo, naive Monte Carlo and exact
//! enumeration.

pub mod applications;
pub mod cgf;
pub mod cli;
pub mod config;
pub mod curves;
pub mod environment;
pub mod error;
pub mod fclt;
pub mod numeric;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod saddle;
pub mod sldp;
pub mod weights;

pub use cgf::{CumulantModel, CustomCumulant};
pub use curves::DeterministicCurves;
pub use environment::{Environment, SeedProvenance};
pub use error::{Error, Result};
pub use oracle::{exact_enum, naive_mc, tilted_mc, McConfig, McMode};
pub use saddle::{empirical_psi, solve_deterministic, solve_saddle, ConditionalSum, SaddleSolution};
pub use sldp::{check_conditions, sldp_estimate, ConditionReport, Method, TGrid, TailEstimate};
pub use weights::{TauModel, WeightModel};
