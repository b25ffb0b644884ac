//! First-order variance contributions by freeze-at-mean re-simulation.
//!
//! For alternative `a` and parameter `p`, the column is re-evaluated with `p`
//! drawn from its usual substream and every other parameter held at its
//! distribution mean; the contribution is that column's variance over the
//! variance of the full base column, clamped to [0, 1].

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::model::DecisionProblem;
use crate::simengine::stats::mean_and_variance;
use crate::simengine::{Plan, ScenarioMatrix, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSensitivity {
    pub total_variance: f64,
    /// True when the objective does not vary; every contribution is then 0.
    pub zero_variance: bool,
    pub contributions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub alternatives: BTreeMap<String, AlternativeSensitivity>,
}

impl SensitivityTable {
    pub fn contribution(&self, alternative: &str, parameter: &str) -> Option<f64> {
        self.alternatives
            .get(alternative)
            .and_then(|a| a.contributions.get(parameter))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("base matrix was not produced from this problem ({0})")]
    MatrixMismatch(&'static str),
}

pub fn sensitivity(
    problem: &DecisionProblem,
    base_matrix: &ScenarioMatrix,
) -> Result<SensitivityTable, SensitivityError> {
    let plan = Plan::new(problem)?;
    if base_matrix.seed != problem.seed {
        return Err(SensitivityError::MatrixMismatch("seed"));
    }
    if base_matrix.sample_count != problem.sample_count {
        return Err(SensitivityError::MatrixMismatch("sample_count"));
    }
    if base_matrix.months != problem.comparison_horizon_months {
        return Err(SensitivityError::MatrixMismatch("horizon"));
    }
    if base_matrix.alternatives != plan.alternative_names() {
        return Err(SensitivityError::MatrixMismatch("alternatives"));
    }

    let mut alternatives = BTreeMap::new();
    for (a, name) in base_matrix.alternatives.iter().enumerate() {
        let (_, total) = mean_and_variance(&base_matrix.columns[a]);
        let zero_variance = !(total > 0.0);
        let mut contributions = BTreeMap::new();
        for (slot, param, dist) in plan.parameter_names(a) {
            let share = if zero_variance || dist.is_fixed() {
                0.0
            } else {
                let column = plan.run_one_random(a, slot)?;
                let (_, var) = mean_and_variance(&column);
                (var / total).clamp(0.0, 1.0)
            };
            contributions.insert(String::from(param), share);
        }
        alternatives.insert(
            name.clone(),
            AlternativeSensitivity {
                total_variance: if zero_variance { 0.0 } else { total },
                zero_variance,
                contributions,
            },
        );
    }
    Ok(SensitivityTable { alternatives })
}
