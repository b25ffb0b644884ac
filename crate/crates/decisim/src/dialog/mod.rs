//! Slot-filling conversation that collects a complete decision problem.
//!
//! ```text
//! Collecting ──last required slot filled──▶ ReadyToSimulate ──simulate──▶ Simulated
//!                                                 ▲                          │
//!                                                 └──────slot changed────────┘
//! any phase ──close──▶ Closed
//! ```
//!
//! Fills at or above [`CONFIDENCE_THRESHOLD`] are applied directly; the first
//! weaker candidate in an utterance becomes a yes/no confirmation question.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use decisim_core::{
    validate_problem, Alternative, DecisionProblem, Distribution, ObjectiveExpr, ParameterSpec, Provenance,
    ValidationReport,
};
use serde::{Deserialize, Serialize};

use crate::warehouse::{PriorAnchor, PriorSource, WarehouseError};

pub mod extract;
pub mod llm;
pub mod template;

pub use extract::ScriptedBackend;
pub use llm::LlmBackend;
pub use template::{SlotKind, SlotSpec, Template, TemplateRegistry};

pub const CONFIDENCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    ReadyToSimulate,
    Simulated,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledSlot {
    pub value: f64,
    pub raw: String,
    pub confidence: f64,
}

/// A proposed slot fill from a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub slot: String,
    pub value: f64,
    pub raw: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("agent backend unreachable: {0}")]
    Unreachable(String),
}

/// Question generation and slot extraction.
pub trait AgentBackend: Send + Sync {
    fn name(&self) -> &str;

    fn next_question(&self, state: &DialogState) -> String {
        state.default_question()
    }

    /// Candidates for slots of `state`'s template; never names other slots.
    fn extract(&self, state: &DialogState, utterance: &str) -> Result<Vec<Candidate>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogError {
    #[error("session is closed")]
    SessionClosed,
}

#[derive(Debug, Clone, Serialize)]
pub struct DialogState {
    pub session_id: String,
    #[serde(skip)]
    template: Arc<Template>,
    pub template_id: String,
    pub filled: BTreeMap<String, FilledSlot>,
    pub pending: Vec<String>,
    pub transcript: Vec<Turn>,
    pub phase: Phase,
    /// Low-confidence candidate waiting for a yes/no.
    pub awaiting_confirmation: Option<Candidate>,
    asked: Option<String>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn is_affirmative(text: &str) -> Option<bool> {
    let t = text.trim().trim_end_matches(['.', '!']).to_lowercase();
    let first = t.split(|c: char| !c.is_alphanumeric() && c != '\'').next().unwrap_or("");
    match first {
        "yes" | "yeah" | "yep" | "y" | "correct" | "right" | "sure" | "exactly" => Some(true),
        "no" | "nope" | "nah" | "n" | "wrong" => Some(false),
        _ => None,
    }
}

impl DialogState {
    pub fn new(session_id: &str, template: Arc<Template>) -> Self {
        let mut s = Self {
            session_id: session_id.to_string(),
            template_id: template.template_id.clone(),
            template,
            filled: BTreeMap::new(),
            pending: Vec::new(),
            transcript: Vec::new(),
            phase: Phase::Collecting,
            awaiting_confirmation: None,
            asked: None,
        };
        s.refresh_pending();
        s
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn template_arc(&self) -> Arc<Template> {
        Arc::clone(&self.template)
    }

    pub fn is_filled(&self, slot: &str) -> bool {
        self.filled.contains_key(slot)
    }

    /// Slot the agent's latest question was about.
    pub fn asked_slot(&self) -> Option<&str> {
        self.asked.as_deref()
    }

    pub fn filled_values(&self) -> BTreeMap<String, f64> {
        self.filled.iter().map(|(k, v)| (k.clone(), v.value)).collect()
    }

    /// Opening line: the template intro, then the first question.
    pub fn open(&mut self, backend: &dyn AgentBackend) -> String {
        let question = backend.next_question(self);
        let reply = if self.template.intro.is_empty() {
            question
        } else {
            format!("{} {}", self.template.intro, question)
        };
        self.asked = self.pending.first().cloned();
        self.push(Speaker::Agent, &reply);
        reply
    }

    pub fn default_question(&self) -> String {
        if let Some(c) = &self.awaiting_confirmation {
            if let Some(slot) = self.template.slot(&c.slot) {
                return format!("Just to confirm: is your {} {}? (yes/no)", slot.label, slot.kind.format(c.value));
            }
        }
        match self.pending.first().and_then(|n| self.template.slot(n)) {
            Some(slot) => slot.prompt.clone(),
            None => "I have everything I need. Shall I run the simulation?".to_string(),
        }
    }

    fn push(&mut self, speaker: Speaker, text: &str) {
        self.transcript.push(Turn {
            speaker,
            text: text.to_string(),
            timestamp: now_ms(),
        });
    }

    fn refresh_pending(&mut self) {
        self.pending = self
            .template
            .slots
            .iter()
            .filter(|s| s.required && !self.filled.contains_key(&s.name))
            .map(|s| s.name.clone())
            .collect();
    }

    fn valid_value(&self, c: &Candidate) -> bool {
        let Some(slot) = self.template.slot(&c.slot) else {
            return false;
        };
        if !c.value.is_finite() || c.value < 0.0 {
            return false;
        }
        match slot.kind {
            SlotKind::Months => c.value >= 1.0 && c.value <= 1200.0,
            _ => true,
        }
    }

    /// Set a slot directly, bypassing extraction. Unknown slots are ignored.
    pub fn fill(&mut self, slot: &str, value: f64, raw: &str) -> bool {
        let c = Candidate {
            slot: slot.to_string(),
            value,
            raw: raw.to_string(),
            confidence: 1.0,
        };
        if !self.valid_value(&c) {
            return false;
        }
        self.apply(c);
        self.settle_phase(true);
        true
    }

    fn apply(&mut self, c: Candidate) -> bool {
        let new = FilledSlot {
            value: c.value,
            raw: c.raw,
            confidence: c.confidence,
        };
        let changed = self.filled.get(&c.slot) != Some(&new);
        self.filled.insert(c.slot, new);
        changed
    }

    fn settle_phase(&mut self, changed: bool) {
        self.refresh_pending();
        self.phase = match (self.pending.is_empty(), self.phase) {
            (false, _) => Phase::Collecting,
            (true, Phase::Simulated) if !changed => Phase::Simulated,
            (true, _) => Phase::ReadyToSimulate,
        };
    }

    pub fn mark_simulated(&mut self) {
        if self.phase == Phase::ReadyToSimulate {
            self.phase = Phase::Simulated;
        }
    }

    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }

    /// One user turn. Accepted in every phase but `Closed`.
    pub fn advance(&mut self, utterance: &str, backend: &dyn AgentBackend) -> Result<String, DialogError> {
        if self.phase == Phase::Closed {
            return Err(DialogError::SessionClosed);
        }
        self.push(Speaker::User, utterance);

        let mut changed = false;
        let mut filled_now = Vec::new();
        let mut rejected_confirmation = false;
        let mut unreachable = false;

        let pending_confirmation = self.awaiting_confirmation.take();
        let answer = pending_confirmation.as_ref().and_then(|_| is_affirmative(utterance));
        match (pending_confirmation, answer) {
            (Some(c), Some(true)) => {
                filled_now.push(c.slot.clone());
                changed |= self.apply(Candidate { confidence: 1.0, ..c });
            }
            (Some(_), Some(false)) => rejected_confirmation = true,
            _ => match backend.extract(self, utterance) {
                Ok(candidates) => {
                    let mut seen = BTreeSet::new();
                    for c in candidates {
                        if !self.valid_value(&c) || !seen.insert(c.slot.clone()) {
                            continue;
                        }
                        if c.confidence >= CONFIDENCE_THRESHOLD {
                            filled_now.push(c.slot.clone());
                            changed |= self.apply(c);
                        } else if self.awaiting_confirmation.is_none() {
                            self.awaiting_confirmation = Some(c);
                        }
                    }
                }
                Err(BackendError::Unreachable(_)) => unreachable = true,
            },
        }
        self.settle_phase(changed);

        let question = backend.next_question(self);
        let reply = if unreachable {
            format!("Sorry, I'm having trouble understanding right now. {question}")
        } else if self.awaiting_confirmation.is_some() {
            question
        } else if rejected_confirmation {
            format!("Okay, let's try again. {question}")
        } else if filled_now.is_empty() && self.phase == Phase::Collecting {
            format!("Sorry, I didn't catch that. {question}")
        } else if self.pending.is_empty() {
            format!("Thanks, I have everything I need: {}. You can run the simulation now.", self.summary())
        } else {
            format!("Thanks. {question}")
        };
        self.asked = match &self.awaiting_confirmation {
            Some(c) => Some(c.slot.clone()),
            None => self.pending.first().cloned(),
        };
        self.push(Speaker::Agent, &reply);
        Ok(reply)
    }

    /// "annual mileage 15000 miles, monthly payment $400, ..."
    pub fn summary(&self) -> String {
        self.template
            .slots
            .iter()
            .filter_map(|s| self.filled.get(&s.name).map(|f| format!("{} {}", s.label, s.kind.format(f.value))))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_count: crate::doc::DEFAULT_SAMPLE_COUNT,
            seed: crate::doc::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("required slots are missing: {}", .0.join(", "))]
    IncompleteSlots(Vec<String>),
    #[error("no value or prior for parameter `{0}`")]
    PriorUnavailable(String),
    #[error(transparent)]
    Warehouse(#[from] WarehouseError),
    #[error("objective: {0}")]
    Objective(#[from] decisim_core::ParseError),
    #[error("built problem failed validation")]
    Invalid(ValidationReport),
}

/// Turn a complete dialog into a decision problem.
///
/// Slot values become point values. A relative (offset) prior matching the
/// parameter spreads a point value into a distribution around it; an absolute
/// prior stands in for an optional slot the user left empty.
pub fn build_problem(state: &DialogState, priors: &dyn PriorSource, sim: SimConfig) -> Result<DecisionProblem, BuildError> {
    if !matches!(state.phase, Phase::ReadyToSimulate | Phase::Simulated) || !state.pending.is_empty() {
        let mut missing = state.pending.clone();
        if missing.is_empty() {
            missing.push("phase".to_string());
        }
        return Err(BuildError::IncompleteSlots(missing));
    }
    build_from_values(state.template(), &state.filled_values(), priors, sim)
}

/// [`build_problem`] over raw slot values; used for what-if variants.
pub fn build_from_values(
    template: &Template,
    values: &BTreeMap<String, f64>,
    priors: &dyn PriorSource,
    sim: SimConfig,
) -> Result<DecisionProblem, BuildError> {
    let missing: Vec<String> = template
        .slots
        .iter()
        .filter(|s| s.required && !values.contains_key(&s.name))
        .map(|s| s.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(BuildError::IncompleteSlots(missing));
    }
    let objective = ObjectiveExpr::parse(&template.objective)?;

    let terms: Vec<u32> = template
        .alternatives
        .iter()
        .map(|alt| match template.slot_for(&alt.name, "term_months") {
            Some(slot) => values[&slot.name].round() as u32,
            None => alt.term_months.unwrap_or(0),
        })
        .collect();
    let horizon = template.horizon.horizon(&terms);

    let mut alternatives = Vec::new();
    for (skeleton, &term) in template.alternatives.iter().zip(&terms) {
        let mut alt = Alternative::new(&skeleton.name, term);
        for (name, p) in &skeleton.parameters {
            let tags: BTreeSet<String> = template.context_tags.union(&p.tags).cloned().collect();
            let point = match p.value {
                Some(template::ValueSource::Const(v)) => Some((v, false)),
                Some(template::ValueSource::Special(template::SpecialValue::Horizon)) => Some((f64::from(horizon), false)),
                None => template
                    .slot_for(&skeleton.name, name)
                    .and_then(|slot| values.get(&slot.name))
                    .map(|&v| (v, true)),
            };
            let spec = match point {
                Some((v, false)) => ParameterSpec::new(name, &p.unit, Distribution::fixed(v)),
                Some((v, true)) => {
                    let found = priors.query_priors(&tags, name)?;
                    match found.iter().find(|r| r.anchor == PriorAnchor::Offset) {
                        Some(r) => ParameterSpec::new(name, &p.unit, r.distribution.shifted(v))
                            .with_provenance(Provenance::WarehousePrior(r.id.clone())),
                        None => ParameterSpec::new(name, &p.unit, Distribution::fixed(v)),
                    }
                }
                None => {
                    let found = priors.query_priors(&tags, name)?;
                    match found.iter().find(|r| r.anchor == PriorAnchor::Absolute) {
                        Some(r) => ParameterSpec::new(name, &p.unit, r.distribution)
                            .with_provenance(Provenance::WarehousePrior(r.id.clone())),
                        None if objective.identifiers().iter().any(|i| i == name) => {
                            return Err(BuildError::PriorUnavailable(format!("{}.{name}", skeleton.name)))
                        }
                        None => continue,
                    }
                }
            };
            alt = alt.bind(spec);
        }
        alternatives.push(alt);
    }

    let problem = DecisionProblem {
        title: template.title.clone(),
        alternatives,
        objective,
        direction: template.direction,
        comparison_horizon_months: horizon,
        sample_count: sim.sample_count,
        seed: sim.seed,
    };
    let report = validate_problem(&problem);
    if !report.is_valid() {
        return Err(BuildError::Invalid(report));
    }
    Ok(problem)
}
