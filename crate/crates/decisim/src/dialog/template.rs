//! Problem templates: the slot checklist plus the alternatives skeleton the
//! slots are poured into.

use std::collections::{BTreeMap, BTreeSet};

use decisim_core::exprlang::{is_builtin, is_identifier};
use decisim_core::{Direction, ObjectiveExpr};
use serde::{Deserialize, Serialize};

pub const BUILTIN_TEMPLATE_ID: &str = "two_option_cost_comparison";
const BUILTIN_TEMPLATE: &str = include_str!("../../data/templates/two_option_cost_comparison.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Money,
    Count,
    Rate,
    Months,
    Miles,
}

impl SlotKind {
    pub fn format(self, v: f64) -> String {
        match self {
            SlotKind::Money => format!("${}", trim(v)),
            SlotKind::Rate => format!("${}/mile", trim(v)),
            SlotKind::Months => format!("{} months", trim(v)),
            SlotKind::Miles => format!("{} miles", trim(v)),
            SlotKind::Count => trim(v),
        }
    }
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub name: String,
    pub label: String,
    pub prompt: String,
    pub kind: SlotKind,
    #[serde(default = "yes")]
    pub required: bool,
    /// Words that tie a number in the same clause to this slot.
    #[serde(default)]
    pub cues: Vec<String>,
    /// `alternative.parameter` or `alternative.term_months`.
    pub maps_to: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonRule {
    /// Smallest multiple of the shortest term that covers the longest term.
    CoverLongestTerm,
    Fixed { months: u32 },
}

impl HorizonRule {
    pub fn horizon(self, terms: &[u32]) -> u32 {
        match self {
            HorizonRule::Fixed { months } => months,
            HorizonRule::CoverLongestTerm => {
                let shortest = terms.iter().copied().filter(|&t| t > 0).min().unwrap_or(0);
                let longest = terms.iter().copied().max().unwrap_or(0);
                if shortest == 0 {
                    return longest;
                }
                longest.div_ceil(shortest) * shortest
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSource {
    Const(f64),
    Special(SpecialValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialValue {
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSkeleton {
    pub unit: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// Absent means the value comes from a slot (or a prior).
    #[serde(default)]
    pub value: Option<ValueSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltSkeleton {
    pub name: String,
    #[serde(default)]
    pub term_months: Option<u32>,
    pub parameters: BTreeMap<String, ParamSkeleton>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub template_id: String,
    pub title: String,
    #[serde(default)]
    pub intro: String,
    pub direction: Direction,
    pub objective: String,
    #[serde(default)]
    pub context_tags: BTreeSet<String>,
    pub horizon: HorizonRule,
    pub slots: Vec<SlotSpec>,
    pub alternatives: Vec<AltSkeleton>,
}

/// Where a slot value lands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Term { alternative: String },
    Parameter { alternative: String, parameter: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template is not valid JSON: {0}")]
    Json(String),
    #[error("template `{template}`: {message}")]
    Invalid { template: String, message: String },
}

impl Template {
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let t: Template = serde_json::from_str(text).map_err(|e| TemplateError::Json(e.to_string()))?;
        t.check()?;
        Ok(t)
    }

    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATE).expect("built-in template is valid")
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn parse_target(&self, path: &str) -> Option<Target> {
        let (alt, rest) = path.split_once('.')?;
        let skeleton = self.alternatives.iter().find(|a| a.name == alt)?;
        if rest == "term_months" {
            return Some(Target::Term {
                alternative: alt.to_string(),
            });
        }
        skeleton.parameters.contains_key(rest).then(|| Target::Parameter {
            alternative: alt.to_string(),
            parameter: rest.to_string(),
        })
    }

    /// The slot feeding `alternative.parameter`, if any.
    pub fn slot_for(&self, alternative: &str, parameter: &str) -> Option<&SlotSpec> {
        let path = format!("{alternative}.{parameter}");
        self.slots.iter().find(|s| s.maps_to.contains(&path))
    }

    fn check(&self) -> Result<(), TemplateError> {
        let fail = |message: String| TemplateError::Invalid {
            template: self.template_id.clone(),
            message,
        };
        let objective = ObjectiveExpr::parse(&self.objective).map_err(|e| fail(format!("objective: {e}")))?;
        if self.alternatives.len() < 2 {
            return Err(fail("needs at least two alternatives".into()));
        }
        let mut seen = BTreeSet::new();
        let mut targets = BTreeSet::new();
        for slot in &self.slots {
            if !is_identifier(&slot.name) || !seen.insert(slot.name.as_str()) {
                return Err(fail(format!("bad or duplicate slot name `{}`", slot.name)));
            }
            if slot.maps_to.is_empty() {
                return Err(fail(format!("slot `{}` maps to nothing", slot.name)));
            }
            for path in &slot.maps_to {
                let target = self
                    .parse_target(path)
                    .ok_or_else(|| fail(format!("slot `{}` maps to unknown `{path}`", slot.name)))?;
                if !targets.insert(path.as_str()) {
                    return Err(fail(format!("`{path}` is fed by more than one slot")));
                }
                if let Target::Term { .. } = target {
                    if slot.kind != SlotKind::Months || !slot.required {
                        return Err(fail(format!("term slot `{}` must be a required months slot", slot.name)));
                    }
                }
            }
        }
        let free: Vec<String> = objective.identifiers().into_iter().filter(|n| !is_builtin(n)).collect();
        for alt in &self.alternatives {
            let term_fed = targets.contains(format!("{}.term_months", alt.name).as_str());
            if alt.term_months.is_none() && !term_fed {
                return Err(fail(format!("alternative `{}` has no term", alt.name)));
            }
            for name in &free {
                let Some(p) = alt.parameters.get(name) else {
                    return Err(fail(format!("alternative `{}` does not bind `{name}`", alt.name)));
                };
                let fed = targets.contains(format!("{}.{name}", alt.name).as_str());
                if p.value.is_some() == fed {
                    return Err(fail(format!(
                        "`{}.{name}` needs exactly one source (constant or slot)",
                        alt.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Templates known to a service instance.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, std::sync::Arc<Template>>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let mut r = Self {
            templates: BTreeMap::new(),
        };
        r.insert(Template::builtin());
        r
    }
}

impl TemplateRegistry {
    pub fn insert(&mut self, t: Template) {
        self.templates.insert(t.template_id.clone(), std::sync::Arc::new(t));
    }

    pub fn get(&self, id: &str) -> Option<std::sync::Arc<Template>> {
        self.templates.get(id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
