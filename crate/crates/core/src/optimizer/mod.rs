//! From scenario samples to a recommendation.
//!
//! Pairwise wins are counted over paired scenarios; exact ties are kept as a
//! separate mass so that `win(a,b) + win(b,a) + tie(a,b) = 1`. When several
//! alternatives share the best value in a scenario the "best" credit is split
//! evenly between them.

mod sensitivity;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::Direction;
use crate::simengine::{summarize_column, SampleStats, ScenarioMatrix};

pub use sensitivity::{sensitivity, AlternativeSensitivity, SensitivityError, SensitivityTable};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.8;

/// Structured summary fields for presentation layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub recommendation: String,
    pub runner_up: Option<String>,
    /// |E[best] − E[runner-up]|
    pub expected_advantage: f64,
    /// P(recommendation strictly beats runner-up)
    pub win_probability_vs_runner_up: Option<f64>,
    pub horizon_months: u32,
    pub sample_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub recommendation: String,
    pub direction: Direction,
    pub horizon_months: u32,
    pub sample_count: usize,
    pub seed: u64,
    /// Alternatives in problem order.
    pub alternatives: Vec<String>,
    pub expected: BTreeMap<String, f64>,
    pub stats: BTreeMap<String, SampleStats>,
    /// `win_matrix[a][b]` = P(a strictly better than b)
    pub win_matrix: BTreeMap<String, BTreeMap<String, f64>>,
    pub tie_mass: BTreeMap<String, BTreeMap<String, f64>>,
    pub best_probability: BTreeMap<String, f64>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityTable>,
    pub narrative: Narrative,
}

impl ComparisonReport {
    pub fn win(&self, a: &str, b: &str) -> f64 {
        self.win_matrix.get(a).and_then(|row| row.get(b)).copied().unwrap_or(0.0)
    }

    pub fn tie(&self, a: &str, b: &str) -> f64 {
        self.tie_mass.get(a).and_then(|row| row.get(b)).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("scenario matrix is not paired across alternatives")]
    UnpairedMatrix,
    #[error("scenario matrix has no scenarios or alternatives")]
    EmptyMatrix,
}

pub fn compare(matrix: &ScenarioMatrix, direction: Direction) -> Result<ComparisonReport, CompareError> {
    if !matrix.paired {
        return Err(CompareError::UnpairedMatrix);
    }
    let n = matrix.sample_count;
    let k = matrix.alternatives.len();
    if n == 0 || k == 0 || matrix.columns.iter().any(|c| c.len() != n) {
        return Err(CompareError::EmptyMatrix);
    }
    let names = &matrix.alternatives;
    let stats: Vec<SampleStats> = matrix.columns.iter().map(|c| summarize_column(c)).collect();

    let mut wins = alloc::vec![alloc::vec![0u64; k]; k];
    let mut best_credit = alloc::vec![0.0f64; k];
    let mut best_idx: Vec<usize> = Vec::with_capacity(k);
    for i in 0..n {
        for a in 0..k {
            let va = matrix.columns[a][i];
            for b in (a + 1)..k {
                let vb = matrix.columns[b][i];
                if direction.better(va, vb) {
                    wins[a][b] += 1;
                } else if direction.better(vb, va) {
                    wins[b][a] += 1;
                }
            }
        }
        best_idx.clear();
        for a in 0..k {
            let va = matrix.columns[a][i];
            match best_idx.first() {
                None => best_idx.push(a),
                Some(&cur) => {
                    let vc = matrix.columns[cur][i];
                    if direction.better(va, vc) {
                        best_idx.clear();
                        best_idx.push(a);
                    } else if !direction.better(vc, va) {
                        best_idx.push(a);
                    }
                }
            }
        }
        let share = 1.0 / best_idx.len() as f64;
        for &a in &best_idx {
            best_credit[a] += share;
        }
    }

    let nf = n as f64;
    let mut win_matrix = BTreeMap::new();
    let mut tie_mass = BTreeMap::new();
    for a in 0..k {
        let mut wrow = BTreeMap::new();
        let mut trow = BTreeMap::new();
        for b in 0..k {
            if a == b {
                continue;
            }
            let ties = n as u64 - wins[a][b] - wins[b][a];
            wrow.insert(names[b].clone(), wins[a][b] as f64 / nf);
            trow.insert(names[b].clone(), ties as f64 / nf);
        }
        win_matrix.insert(names[a].clone(), wrow);
        tie_mass.insert(names[a].clone(), trow);
    }

    let order = ranking(names, &stats, direction);
    let best = order[0];
    let runner_up = order.get(1).copied();
    let narrative = Narrative {
        recommendation: names[best].clone(),
        runner_up: runner_up.map(|r| names[r].clone()),
        expected_advantage: runner_up.map_or(0.0, |r| (stats[best].mean - stats[r].mean).abs()),
        win_probability_vs_runner_up: runner_up.map(|r| wins[best][r] as f64 / nf),
        horizon_months: matrix.months,
        sample_count: n,
        seed: matrix.seed,
    };

    Ok(ComparisonReport {
        recommendation: names[best].clone(),
        direction,
        horizon_months: matrix.months,
        sample_count: n,
        seed: matrix.seed,
        alternatives: names.clone(),
        expected: names.iter().cloned().zip(stats.iter().map(|s| s.mean)).collect(),
        best_probability: names
            .iter()
            .cloned()
            .zip(best_credit.iter().map(|c| c / nf))
            .collect(),
        stats: names.iter().cloned().zip(stats).collect(),
        win_matrix,
        tie_mass,
        sensitivity: None,
        narrative,
    })
}

/// Indices ordered best first: expected value, then lower stddev, then name.
fn ranking(names: &[String], stats: &[SampleStats], direction: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        let by_mean = match direction {
            Direction::Minimize => stats[a].mean.total_cmp(&stats[b].mean),
            Direction::Maximize => stats[b].mean.total_cmp(&stats[a].mean),
        };
        by_mean
            .then(stats[a].stddev.total_cmp(&stats[b].stddev))
            .then_with(|| names[a].cmp(&names[b]))
            .then(Ordering::Equal)
    });
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Caveat {
    LowConfidence { confidence: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub alternative: String,
    pub confidence: f64,
    pub caveats: Vec<Caveat>,
}

impl Recommendation {
    pub fn is_low_confidence(&self) -> bool {
        self.caveats.iter().any(|c| matches!(c, Caveat::LowConfidence { .. }))
    }
}

pub fn recommend(report: &ComparisonReport, min_confidence: f64) -> Recommendation {
    let confidence = report
        .best_probability
        .get(&report.recommendation)
        .copied()
        .unwrap_or(0.0);
    let mut caveats = Vec::new();
    if confidence < min_confidence {
        caveats.push(Caveat::LowConfidence {
            confidence,
            threshold: min_confidence,
        });
    }
    Recommendation {
        alternative: report.recommendation.clone(),
        confidence,
        caveats,
    }
}

#[cfg(test)]
mod tests;
