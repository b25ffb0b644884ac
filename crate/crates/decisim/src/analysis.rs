//! simulate → compare → (optional) sensitivity, as one call.

use decisim_core::optimizer::{CompareError, SensitivityError};
use decisim_core::simengine::simulate_with_workers;
use decisim_core::{compare, sensitivity, ComparisonReport, DecisionProblem, ScenarioMatrix, SimError, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub sensitivity: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            sensitivity: false,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("problem failed validation")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Simulation(SimError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Sensitivity(SensitivityError),
}

impl From<SimError> for AnalysisError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidProblem(report) => AnalysisError::Invalid(report),
            other => AnalysisError::Simulation(other),
        }
    }
}

impl From<SensitivityError> for AnalysisError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Simulation(s) => s.into(),
            other => AnalysisError::Sensitivity(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub matrix: ScenarioMatrix,
    pub report: ComparisonReport,
}

pub fn analyze(problem: &DecisionProblem, opts: RunOptions) -> Result<Analysis, AnalysisError> {
    let matrix = simulate_with_workers(problem, opts.workers.max(1))?;
    let mut report = compare(&matrix, problem.direction)?;
    if opts.sensitivity {
        report.sensitivity = Some(sensitivity(problem, &matrix)?);
    }
    Ok(Analysis { matrix, report })
}

/// Stable JSON encoding of a report; byte-identical for identical reports.
pub fn report_json(report: &ComparisonReport) -> String {
    serde_json::to_string_pretty(report).expect("reports always serialize")
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Doc(#[from] crate::doc::DocError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("stored simulation config does not match the problem snapshot")]
    ConfigMismatch,
}

/// Re-run a stored session from its snapshot.
pub fn replay(record: &crate::warehouse::SessionRecord, workers: usize) -> Result<ComparisonReport, ReplayError> {
    let problem = record.problem.to_problem()?;
    if problem.seed != record.simulation.seed || problem.sample_count != record.simulation.sample_count {
        return Err(ReplayError::ConfigMismatch);
    }
    let opts = RunOptions {
        workers,
        sensitivity: record.simulation.sensitivity,
    };
    Ok(analyze(&problem, opts)?.report)
}
