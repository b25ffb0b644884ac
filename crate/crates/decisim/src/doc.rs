//! Problem-spec JSON document.
//!
//! ```json
//! {
//!   "title": "Buy or lease",
//!   "direction": "minimize",
//!   "comparison_horizon_months": 72,
//!   "sample_count": 100000,
//!   "seed": 42,
//!   "objective": "down_payment + monthly_payment * months",
//!   "alternatives": [
//!     {"name": "buy", "term_months": 60, "bindings": {
//!        "down_payment": {"unit": "USD", "dist": {"kind": "fixed", "value": 3000}},
//!        "monthly_payment": {"unit": "USD/month", "dist": {"kind": "plus_minus", "value": 400, "spread": 50}}
//!     }}
//!   ]
//! }
//! ```
//!
//! Unknown keys are rejected at every level. `plus_minus` is input sugar for a
//! uniform interval and is written back out as `uniform`.

use std::collections::BTreeMap;

use decisim_core::exprlang::ParseError;
use decisim_core::{Alternative, DecisionProblem, Direction, Distribution, ObjectiveExpr, ParameterSpec, Provenance};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;

fn default_sample_count() -> usize {
    DEFAULT_SAMPLE_COUNT
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub title: String,
    pub direction: Direction,
    pub comparison_horizon_months: u32,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub objective: String,
    pub alternatives: Vec<AlternativeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeDoc {
    pub name: String,
    pub term_months: u32,
    #[serde(default)]
    pub bindings: BTreeMap<String, BindingDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingDoc {
    #[serde(default)]
    pub unit: String,
    pub dist: DistDoc,
    /// Id of the warehouse prior the distribution came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistDoc {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, stddev: f64, lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    PlusMinus { value: f64, spread: f64 },
}

impl From<DistDoc> for Distribution {
    fn from(d: DistDoc) -> Self {
        match d {
            DistDoc::Fixed { value } => Distribution::fixed(value),
            DistDoc::Uniform { lo, hi } => Distribution::uniform(lo, hi),
            DistDoc::Normal { mean, stddev, lo, hi } => Distribution::normal(mean, stddev, lo, hi),
            DistDoc::Triangular { lo, mode, hi } => Distribution::triangular(lo, mode, hi),
            DistDoc::PlusMinus { value, spread } => Distribution::plus_minus(value, spread),
        }
    }
}

impl From<Distribution> for DistDoc {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Fixed { value } => DistDoc::Fixed { value },
            Distribution::Uniform { lo, hi } => DistDoc::Uniform { lo, hi },
            Distribution::Normal { mean, stddev, lo, hi } => DistDoc::Normal { mean, stddev, lo, hi },
            Distribution::Triangular { lo, mode, hi } => DistDoc::Triangular { lo, mode, hi },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DocError {
    #[error("invalid problem document at `{path}`: {message}")]
    Json { path: String, message: String },
    #[error("objective: {0}")]
    Objective(#[from] ParseError),
}

/// Deserialize `T` from JSON, reporting the path of the offending field.
pub fn from_json_with_path<T: serde::de::DeserializeOwned>(text: &[u8]) -> Result<T, (String, String)> {
    let de = &mut serde_json::Deserializer::from_slice(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        (path, e.into_inner().to_string())
    })?;
    Ok(value)
}

impl ProblemDoc {
    pub fn from_json(text: &str) -> Result<Self, DocError> {
        from_json_with_path(text.as_bytes()).map_err(|(path, message)| DocError::Json { path, message })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem documents always serialize")
    }

    pub fn to_problem(&self) -> Result<DecisionProblem, DocError> {
        let objective = ObjectiveExpr::parse(&self.objective)?;
        let alternatives = self
            .alternatives
            .iter()
            .map(|a| {
                let mut alt = Alternative::new(&a.name, a.term_months);
                for (name, b) in &a.bindings {
                    let provenance = match &b.prior {
                        Some(id) => Provenance::WarehousePrior(id.clone()),
                        None => Provenance::UserSupplied,
                    };
                    alt = alt.bind(ParameterSpec::new(name, &b.unit, b.dist.into()).with_provenance(provenance));
                }
                alt
            })
            .collect();
        Ok(DecisionProblem {
            title: self.title.clone(),
            alternatives,
            objective,
            direction: self.direction,
            comparison_horizon_months: self.comparison_horizon_months,
            sample_count: self.sample_count,
            seed: self.seed,
        })
    }

    pub fn from_problem(problem: &DecisionProblem) -> Self {
        let alternatives = problem
            .alternatives
            .iter()
            .map(|a| AlternativeDoc {
                name: a.name.clone(),
                term_months: a.term_months,
                bindings: a
                    .bindings
                    .iter()
                    .map(|(name, spec)| {
                        let prior = match &spec.provenance {
                            Provenance::WarehousePrior(id) => Some(id.clone()),
                            Provenance::UserSupplied => None,
                        };
                        let binding = BindingDoc {
                            unit: spec.unit.clone(),
                            dist: spec.distribution.into(),
                            prior,
                        };
                        (name.clone(), binding)
                    })
                    .collect(),
            })
            .collect();
        ProblemDoc {
            title: problem.title.clone(),
            direction: problem.direction,
            comparison_horizon_months: problem.comparison_horizon_months,
            sample_count: problem.sample_count,
            seed: problem.seed,
            objective: problem.objective.to_source(),
            alternatives,
        }
    }
}
