//! Decision problems under uncertainty: domain model, objective-expression
//! language, counter-based seeded Monte Carlo engine and the comparison /
//! sensitivity logic that turns scenario samples into a recommendation.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature only adds
//! multi-threaded scenario sharding; results are identical either way.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod exprlang;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod simengine;
pub mod special;
#[cfg(test)]
mod testkit;

pub use exprlang::{EvalError, EvalScope, ObjectiveExpr, ParseError};
pub use model::{
    validate_problem, Alternative, DecisionProblem, Direction, Distribution, ParameterSpec,
    Provenance, ValidationReport, Violation,
};
pub use optimizer::{compare, recommend, sensitivity, ComparisonReport, Recommendation};
pub use simengine::{simulate, summarize, SampleStats, ScenarioMatrix, SimError};
