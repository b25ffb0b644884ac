//! Seeded Monte Carlo simulation of a [`DecisionProblem`].
//!
//! Scenario `i` draws parameter `p` from the stream keyed by
//! `(seed, p, i)` (see [`crate::rng`]) using inverse-CDF sampling with a single
//! uniform. Alternatives that bind the same parameter name therefore see the
//! same uniform in scenario `i` (common random numbers), and every scenario is
//! computed independently of how the run is sharded.

pub(crate) mod stats;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::exprlang::{CompiledExpr, EvalError};
use crate::model::{validate_problem, DecisionProblem, Distribution, ValidationReport};
use crate::rng::{open_unit, parameter_key, scenario_key, RandomStream};

pub use stats::{summarize, summarize_column, HistogramBin, Percentiles, SampleStats};

/// Objective values, one column per alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMatrix {
    pub alternatives: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub seed: u64,
    pub sample_count: usize,
    pub months: u32,
    pub paired: bool,
}

impl ScenarioMatrix {
    pub fn column(&self, alternative: &str) -> Option<&[f64]> {
        self.alternatives
            .iter()
            .position(|a| a == alternative)
            .map(|i| self.columns[i].as_slice())
    }

    /// CSV with a header row of alternative names, one scenario per row.
    /// Values use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        use core::fmt::Write;
        let mut out = self.alternatives.join(",");
        out.push('\n');
        for i in 0..self.sample_count {
            for (k, col) in self.columns.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:?}", col[i]);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("problem failed validation with {} violation(s)", .0.violations.len())]
    InvalidProblem(ValidationReport),
    #[error("alternative `{alternative}` failed in scenario {scenario}: {cause}")]
    EvaluationFailed {
        alternative: String,
        scenario: usize,
        cause: EvalError,
    },
}

/// Draw one value of `dist` from `stream` (consumes one uniform).
pub fn sample_parameter(dist: &Distribution, stream: &mut RandomStream) -> f64 {
    dist.quantile(stream.next_open_unit())
}

#[derive(Debug, Clone)]
struct AltPlan {
    name: String,
    expr: CompiledExpr,
    /// (index into `Plan::params`, distribution) per compiled slot
    slots: Vec<(usize, Distribution)>,
}

/// A validated problem prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Plan {
    seed: u64,
    sample_count: usize,
    months: u32,
    /// parameter names in sorted order with their stream keys
    params: Vec<(String, u64)>,
    alts: Vec<AltPlan>,
}

impl Plan {
    pub fn new(problem: &DecisionProblem) -> Result<Self, SimError> {
        let report = validate_problem(problem);
        if !report.is_valid() {
            return Err(SimError::InvalidProblem(report));
        }
        let identifiers = problem.objective.identifiers();
        let mut names: Vec<&str> = identifiers.iter().map(String::as_str).collect();
        names.sort_unstable();
        let params: Vec<(String, u64)> = names
            .iter()
            .map(|n| (String::from(*n), parameter_key(problem.seed, n)))
            .collect();
        let expr = problem.objective.compile(&identifiers);
        let alts = problem
            .alternatives
            .iter()
            .map(|alt| AltPlan {
                name: alt.name.clone(),
                expr: expr.clone(),
                slots: identifiers
                    .iter()
                    .map(|id| {
                        let idx = params.iter().position(|(n, _)| n == id).unwrap_or(0);
                        (idx, alt.bindings[id].distribution)
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            seed: problem.seed,
            sample_count: problem.sample_count,
            months: problem.comparison_horizon_months,
            params,
            alts,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn alternative_names(&self) -> Vec<String> {
        self.alts.iter().map(|a| a.name.clone()).collect()
    }

    pub(crate) fn parameter_names(&self, alt: usize) -> Vec<(usize, &str, Distribution)> {
        let mut out: Vec<(usize, &str, Distribution)> = Vec::new();
        for (slot, (idx, dist)) in self.alts[alt].slots.iter().enumerate() {
            out.push((slot, self.params[*idx].0.as_str(), *dist));
        }
        out
    }

    #[inline]
    fn uniform(&self, param: usize, scenario: usize) -> f64 {
        open_unit(RandomStream::new(scenario_key(self.params[param].1, scenario as u64)).next_u64())
    }

    /// Evaluate scenarios `range` for every alternative.
    pub fn run(&self, range: Range<usize>) -> Result<Vec<Vec<f64>>, SimError> {
        let len = range.len();
        let mut columns: Vec<Vec<f64>> = self.alts.iter().map(|_| Vec::with_capacity(len)).collect();
        let mut uniforms = alloc::vec![0.0; self.params.len()];
        let mut slots = Vec::new();
        let mut stack = Vec::new();
        let m = f64::from(self.months);
        for i in range {
            for (k, u) in uniforms.iter_mut().enumerate() {
                *u = self.uniform(k, i);
            }
            for (alt, col) in self.alts.iter().zip(columns.iter_mut()) {
                slots.clear();
                slots.extend(alt.slots.iter().map(|(k, d)| d.quantile(uniforms[*k])));
                let v = alt
                    .expr
                    .eval(&slots, m, &mut stack)
                    .map_err(|cause| SimError::EvaluationFailed {
                        alternative: alt.name.clone(),
                        scenario: i,
                        cause,
                    })?;
                col.push(v);
            }
        }
        Ok(columns)
    }

    /// One alternative's column with only slot `random_slot` sampled and every
    /// other parameter held at its distribution mean.
    pub(crate) fn run_one_random(&self, alt: usize, random_slot: usize) -> Result<Vec<f64>, SimError> {
        let plan = &self.alts[alt];
        let mut slots: Vec<f64> = plan.slots.iter().map(|(_, d)| d.mean()).collect();
        let (param, dist) = plan.slots[random_slot];
        let mut stack = Vec::new();
        let m = f64::from(self.months);
        let mut out = Vec::with_capacity(self.sample_count);
        for i in 0..self.sample_count {
            slots[random_slot] = dist.quantile(self.uniform(param, i));
            let v = plan
                .expr
                .eval(&slots, m, &mut stack)
                .map_err(|cause| SimError::EvaluationFailed {
                    alternative: plan.name.clone(),
                    scenario: i,
                    cause,
                })?;
            out.push(v);
        }
        Ok(out)
    }

    fn matrix_from(&self, columns: Vec<Vec<f64>>) -> ScenarioMatrix {
        ScenarioMatrix {
            alternatives: self.alternative_names(),
            columns,
            seed: self.seed,
            sample_count: self.sample_count,
            months: self.months,
            paired: true,
        }
    }
}

/// Run every scenario of `problem` on the calling thread.
pub fn simulate(problem: &DecisionProblem) -> Result<ScenarioMatrix, SimError> {
    let plan = Plan::new(problem)?;
    let columns = plan.run(0..plan.sample_count)?;
    Ok(plan.matrix_from(columns))
}

/// Shard scenarios across `workers` threads. Output equals [`simulate`].
#[cfg(feature = "std")]
pub fn simulate_with_workers(problem: &DecisionProblem, workers: usize) -> Result<ScenarioMatrix, SimError> {
    let plan = Plan::new(problem)?;
    let n = plan.sample_count;
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        let columns = plan.run(0..n)?;
        return Ok(plan.matrix_from(columns));
    }
    let chunk = n.div_ceil(workers);
    let shards: Vec<Result<Vec<Vec<f64>>, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let plan = &plan;
                let range = (w * chunk).min(n)..((w + 1) * chunk).min(n);
                scope.spawn(move || plan.run(range))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    let mut columns: Vec<Vec<f64>> = plan.alts.iter().map(|_| Vec::with_capacity(n)).collect();
    for shard in shards {
        for (col, part) in columns.iter_mut().zip(shard?) {
            col.extend_from_slice(&part);
        }
    }
    Ok(plan.matrix_from(columns))
}

/// Objective of one alternative with every parameter at its mean.
pub fn point_estimate(problem: &DecisionProblem, alternative: &str, months: u32) -> Result<f64, EvalError> {
    let alt = problem
        .alternative(alternative)
        .ok_or_else(|| EvalError::UnboundIdentifier(String::from(alternative)))?;
    let mut scope = crate::exprlang::EvalScope::new(f64::from(months));
    for (name, spec) in &alt.bindings {
        scope.set(name, spec.distribution.mean());
    }
    problem.objective.eval(&scope)
}
