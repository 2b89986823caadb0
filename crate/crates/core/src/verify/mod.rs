// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles for the production code paths.
//!
//! Nothing in here reuses the posterior recursions or the prefix selection it
//! checks: posteriors are recomputed by direct summation over change times,
//! subset feasibility by exhaustive search in exact integer arithmetic, and
//! optimality claims by exact dynamic programming over rational numbers.

pub mod dp;
mod exact;
pub mod oracle;
pub mod order;
pub mod suites;

pub use dp::{example3_enumeration, uniform_opt_dp, DiscreteInstance, Example3Report, OptimalityRow};
pub use oracle::{brute_force_posterior, brute_force_subset};
pub use order::{h_o, h_o_monotone_check, i_o, partial_leq, OrderedVec};
