//! Decision problems, alternatives and parameter distributions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::exprlang::{is_builtin, is_identifier, is_reserved, ObjectiveExpr};
use crate::special::{normal_cdf, normal_isf, normal_pdf, normal_quantile, normal_sf};

/// Parameter distribution. Normal is truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, stddev: f64, lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
}

/// Why a distribution is invalid; the string is the violation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionIssue {
    NonFinite,
    DegenerateInterval,
    ModeOutOfRange,
    NonPositiveStddev,
}

impl DistributionIssue {
    pub fn code(self) -> &'static str {
        match self {
            DistributionIssue::NonFinite => "non_finite_value",
            DistributionIssue::DegenerateInterval => "degenerate_interval",
            DistributionIssue::ModeOutOfRange => "mode_out_of_range",
            DistributionIssue::NonPositiveStddev => "non_positive_stddev",
        }
    }
}

impl Distribution {
    pub fn fixed(value: f64) -> Self {
        Distribution::Fixed { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Distribution::Uniform { lo, hi }
    }

    /// `point ± spread`, read as a uniform interval.
    pub fn plus_minus(point: f64, spread: f64) -> Self {
        if spread == 0.0 {
            Distribution::Fixed { value: point }
        } else {
            Distribution::Uniform {
                lo: point - spread.abs(),
                hi: point + spread.abs(),
            }
        }
    }

    pub fn triangular(lo: f64, mode: f64, hi: f64) -> Self {
        Distribution::Triangular { lo, mode, hi }
    }

    pub fn normal(mean: f64, stddev: f64, lo: f64, hi: f64) -> Self {
        Distribution::Normal { mean, stddev, lo, hi }
    }

    pub fn check(&self) -> Result<(), DistributionIssue> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            Distribution::Fixed { value } => {
                if !value.is_finite() {
                    return Err(DistributionIssue::NonFinite);
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !finite(&[lo, hi]) {
                    return Err(DistributionIssue::NonFinite);
                }
                if lo >= hi {
                    return Err(DistributionIssue::DegenerateInterval);
                }
            }
            Distribution::Normal { mean, stddev, lo, hi } => {
                if !finite(&[mean, stddev, lo, hi]) {
                    return Err(DistributionIssue::NonFinite);
                }
                if stddev <= 0.0 {
                    return Err(DistributionIssue::NonPositiveStddev);
                }
                if lo >= hi {
                    return Err(DistributionIssue::DegenerateInterval);
                }
            }
            Distribution::Triangular { lo, mode, hi } => {
                if !finite(&[lo, mode, hi]) {
                    return Err(DistributionIssue::NonFinite);
                }
                if lo >= hi {
                    return Err(DistributionIssue::DegenerateInterval);
                }
                if mode < lo || mode > hi {
                    return Err(DistributionIssue::ModeOutOfRange);
                }
            }
        }
        Ok(())
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Distribution::Fixed { .. })
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Fixed { value } => (value, value),
            Distribution::Uniform { lo, hi }
            | Distribution::Normal { lo, hi, .. }
            | Distribution::Triangular { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Fixed { value } => value,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Triangular { lo, mode, hi } => (lo + mode + hi) / 3.0,
            Distribution::Normal { mean, stddev, lo, hi } => {
                let t = Truncation::new(mean, stddev, lo, hi);
                match t.mass() {
                    Some(z) => mean + stddev * (normal_pdf(t.a) - normal_pdf(t.b)) / z,
                    None => 0.5 * (lo + hi),
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Fixed { .. } => 0.0,
            Distribution::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Distribution::Triangular { lo, mode, hi } => {
                (lo * lo + mode * mode + hi * hi - lo * mode - lo * hi - mode * hi) / 18.0
            }
            Distribution::Normal { mean, stddev, lo, hi } => {
                let t = Truncation::new(mean, stddev, lo, hi);
                match t.mass() {
                    Some(z) => {
                        let (pa, pb) = (normal_pdf(t.a), normal_pdf(t.b));
                        let r = (pa - pb) / z;
                        stddev * stddev * (1.0 + (t.a * pa - t.b * pb) / z - r * r)
                    }
                    None => (hi - lo) * (hi - lo) / 12.0,
                }
            }
        }
    }

    /// Inverse CDF at `u` in (0, 1); the result always lies in the support.
    pub fn quantile(&self, u: f64) -> f64 {
        let v = match *self {
            Distribution::Fixed { value } => return value,
            Distribution::Uniform { lo, hi } => lo + u * (hi - lo),
            Distribution::Triangular { lo, mode, hi } => {
                let width = hi - lo;
                let split = (mode - lo) / width;
                if u < split {
                    lo + libm::sqrt(u * width * (mode - lo))
                } else {
                    hi - libm::sqrt((1.0 - u) * width * (hi - mode))
                }
            }
            Distribution::Normal { mean, stddev, lo, hi } => {
                let t = Truncation::new(mean, stddev, lo, hi);
                match t.mass() {
                    Some(_) if t.a >= 0.0 => {
                        // upper tail: invert the survival function for accuracy
                        let (sa, sb) = (normal_sf(t.a), normal_sf(t.b));
                        mean + stddev * normal_isf(sa - u * (sa - sb))
                    }
                    Some(_) => {
                        let (pa, pb) = (normal_cdf(t.a), normal_cdf(t.b));
                        mean + stddev * normal_quantile(pa + u * (pb - pa))
                    }
                    // interval so far in the tail that its mass underflows
                    None => lo + u * (hi - lo),
                }
            }
        };
        let (lo, hi) = self.support();
        v.clamp(lo, hi)
    }

    /// Shift by `offset` (used to centre a relative prior on a point value).
    pub fn shifted(&self, offset: f64) -> Distribution {
        match *self {
            Distribution::Fixed { value } => Distribution::Fixed { value: value + offset },
            Distribution::Uniform { lo, hi } => Distribution::Uniform {
                lo: lo + offset,
                hi: hi + offset,
            },
            Distribution::Normal { mean, stddev, lo, hi } => Distribution::Normal {
                mean: mean + offset,
                stddev,
                lo: lo + offset,
                hi: hi + offset,
            },
            Distribution::Triangular { lo, mode, hi } => Distribution::Triangular {
                lo: lo + offset,
                mode: mode + offset,
                hi: hi + offset,
            },
        }
    }
}

struct Truncation {
    a: f64,
    b: f64,
}

impl Truncation {
    fn new(mean: f64, stddev: f64, lo: f64, hi: f64) -> Self {
        Self {
            a: (lo - mean) / stddev,
            b: (hi - mean) / stddev,
        }
    }

    fn mass(&self) -> Option<f64> {
        let z = if self.a >= 0.0 {
            normal_sf(self.a) - normal_sf(self.b)
        } else {
            normal_cdf(self.b) - normal_cdf(self.a)
        };
        (z > 1e-300).then_some(z)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    UserSupplied,
    WarehousePrior(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub unit: String,
    pub distribution: Distribution,
    pub provenance: Provenance,
}

impl ParameterSpec {
    pub fn new(name: &str, unit: &str, distribution: Distribution) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            distribution,
            provenance: Provenance::UserSupplied,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub name: String,
    pub term_months: u32,
    pub bindings: BTreeMap<String, ParameterSpec>,
}

impl Alternative {
    pub fn new(name: &str, term_months: u32) -> Self {
        Self {
            name: name.into(),
            term_months,
            bindings: BTreeMap::new(),
        }
    }

    pub fn bind(mut self, spec: ParameterSpec) -> Self {
        self.bindings.insert(spec.name.clone(), spec);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    #[inline]
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProblem {
    pub title: String,
    pub alternatives: Vec<Alternative>,
    pub objective: ObjectiveExpr,
    pub direction: Direction,
    pub comparison_horizon_months: u32,
    pub sample_count: usize,
    pub seed: u64,
}

impl DecisionProblem {
    pub fn alternative(&self, name: &str) -> Option<&Alternative> {
        self.alternatives.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: &str, path: String, message: String) {
        self.violations.push(Violation {
            code: code.into(),
            path,
            message,
        });
    }
}

/// Every violated invariant, in a deterministic order.
pub fn validate_problem(problem: &DecisionProblem) -> ValidationReport {
    let mut report = ValidationReport::default();

    if problem.alternatives.len() < 2 {
        report.push(
            "too_few_alternatives",
            "alternatives".into(),
            format!("need at least 2 alternatives, found {}", problem.alternatives.len()),
        );
    }
    if problem.comparison_horizon_months == 0 {
        report.push(
            "invalid_horizon",
            "comparison_horizon_months".into(),
            "horizon must be at least 1 month".into(),
        );
    }
    if problem.sample_count == 0 {
        report.push(
            "invalid_sample_count",
            "sample_count".into(),
            "sample_count must be at least 1".into(),
        );
    }

    let identifiers = problem.objective.identifiers();
    let mut seen = BTreeSet::new();
    for (i, alt) in problem.alternatives.iter().enumerate() {
        let base = format!("alternatives[{i}]");
        if !is_identifier(&alt.name) {
            report.push(
                "invalid_identifier",
                format!("{base}.name"),
                format!("`{}` does not match [a-z][a-z0-9_]*", alt.name),
            );
        }
        if !seen.insert(alt.name.as_str()) {
            report.push(
                "duplicate_alternative",
                format!("{base}.name"),
                format!("alternative `{}` appears more than once", alt.name),
            );
        }
        if alt.term_months == 0 {
            report.push(
                "invalid_term",
                format!("{base}.term_months"),
                "term_months must be at least 1".into(),
            );
        } else if alt.term_months > problem.comparison_horizon_months
            && problem.comparison_horizon_months > 0
        {
            report.push(
                "horizon_shorter_than_term",
                "comparison_horizon_months".into(),
                format!(
                    "horizon {} is shorter than `{}` term {}",
                    problem.comparison_horizon_months, alt.name, alt.term_months
                ),
            );
        }
        for (key, spec) in &alt.bindings {
            let path = format!("{base}.bindings.{key}");
            if !is_identifier(key) {
                report.push(
                    "invalid_identifier",
                    path.clone(),
                    format!("`{key}` does not match [a-z][a-z0-9_]*"),
                );
            } else if is_builtin(key) || is_reserved(key) {
                report.push(
                    "reserved_identifier",
                    path.clone(),
                    format!("`{key}` is a builtin or function name"),
                );
            }
            if spec.name != *key {
                report.push(
                    "binding_name_mismatch",
                    path.clone(),
                    format!("binding key `{key}` holds parameter `{}`", spec.name),
                );
            }
            if let Err(issue) = spec.distribution.check() {
                report.push(
                    issue.code(),
                    format!("{path}.distribution"),
                    format!("invalid distribution {:?}", spec.distribution),
                );
            }
        }
        for name in &identifiers {
            if !alt.bindings.contains_key(name) {
                report.push(
                    "unbound_variable",
                    format!("{base}.bindings.{name}"),
                    format!("objective uses `{name}` but `{}` does not bind it", alt.name),
                );
            }
        }
    }
    report
}

/// Objective identifiers an alternative leaves unbound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeVariables {
    pub alternative: String,
    pub unbound: Vec<String>,
}

pub fn free_variables(problem: &DecisionProblem) -> Vec<FreeVariables> {
    let identifiers = problem.objective.identifiers();
    problem
        .alternatives
        .iter()
        .map(|alt| FreeVariables {
            alternative: alt.name.clone(),
            unbound: identifiers
                .iter()
                .filter(|n| !alt.bindings.contains_key(n.as_str()))
                .cloned()
                .collect(),
        })
        .collect()
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        }
    }
}
