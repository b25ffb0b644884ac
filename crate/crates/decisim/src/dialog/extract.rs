//! Rule-based extraction: unit-anchored number mentions matched to slots by
//! cue words in the same clause.

use std::sync::OnceLock;

use regex::Regex;

use super::template::{SlotKind, SlotSpec, Template};
use super::{AgentBackend, BackendError, Candidate, DialogState};

/// Unit attached to a number in the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Dollars,
    Cents,
    Miles,
    Months,
    Bare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    /// Normalized: dollars, miles or months.
    pub value: f64,
    pub unit: Unit,
    pub per_mile: bool,
    pub start: usize,
    pub end: usize,
    pub raw: String,
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)
            (?P<dollar>\$\s?)?
            (?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)
            (?P<k>k\b)?
            (?:\s*-?\s*(?P<unit>cents?\b|¢|dollars?\b|bucks\b|usd\b|miles?\b|mi\b|years?\b|yrs?\b|months?\b|mos?\b))?
            (?P<per>\s*(?:per|a|an|each|/)\s*mile\b)?",
        )
        .expect("valid pattern")
    })
}

/// Every number in `text`, normalized ("$3,000" → 3000, "15 cents" → 0.15,
/// "5 years" → 60 months, "15k miles" → 15000).
pub fn mentions(text: &str) -> Vec<Mention> {
    let mut out = Vec::new();
    for caps in number_pattern().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        // skip digits glued to letters, e.g. "a4" or "mp3"
        if text[..whole.start()].chars().next_back().is_some_and(|c| c.is_alphanumeric()) {
            continue;
        }
        let Ok(mut value) = caps["num"].replace(',', "").parse::<f64>() else {
            continue;
        };
        if caps.name("k").is_some() {
            value *= 1000.0;
        }
        let unit_word = caps.name("unit").map(|m| m.as_str().to_ascii_lowercase());
        let unit = match unit_word.as_deref() {
            Some(u) if u.starts_with("cent") || u == "¢" => {
                value /= 100.0;
                Unit::Cents
            }
            Some(u) if u.starts_with("mi") => Unit::Miles,
            Some(u) if u.starts_with('y') => {
                value *= 12.0;
                Unit::Months
            }
            Some(u) if u.starts_with("mo") => Unit::Months,
            Some(_) => Unit::Dollars,
            None if caps.name("dollar").is_some() => Unit::Dollars,
            None => Unit::Bare,
        };
        if !value.is_finite() {
            continue;
        }
        out.push(Mention {
            value,
            unit,
            per_mile: caps.name("per").is_some(),
            start: whole.start(),
            end: whole.end(),
            raw: whole.as_str().trim().to_string(),
        });
    }
    out
}

/// Byte spans of clauses: sentences split further on commas (not inside
/// numbers), semicolons and a few conjunctions.
pub fn clauses(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let lower = text.to_ascii_lowercase();
    let mut cuts = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        let digit_at = |j: usize| bytes.get(j).is_some_and(u8::is_ascii_digit);
        let boundary = match b {
            b';' | b'!' | b'?' | b'\n' => true,
            b',' | b'.' => !(i > 0 && digit_at(i - 1) && digit_at(i + 1)) && !(b == b'.' && digit_at(i + 1)),
            _ => false,
        };
        if boundary {
            cuts.push((i, i + 1));
        }
    }
    for word in [" and ", " but ", " while ", " whereas "] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(word) {
            let at = from + pos;
            cuts.push((at, at + word.len()));
            from = at + word.len();
        }
    }
    cuts.sort_unstable();
    let mut spans = Vec::new();
    let mut start = 0;
    for (a, b) in cuts {
        if a > start {
            spans.push((start, a));
        }
        start = start.max(b);
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

/// Positions of `cue` in `hay` that start at a word boundary.
fn cue_positions(hay: &str, cue: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(cue) {
        let at = from + pos;
        if !hay[..at].chars().next_back().is_some_and(|c| c.is_alphanumeric()) {
            out.push(at);
        }
        from = at + cue.len();
    }
    out
}

/// How well a mention's unit fits a slot kind: 2 = anchored, 1 = bare number, 0 = no.
pub fn unit_fit(kind: SlotKind, m: &Mention) -> u8 {
    match (kind, m.unit) {
        (SlotKind::Rate, Unit::Cents) => 2,
        (SlotKind::Rate, Unit::Dollars) if m.per_mile => 2,
        (SlotKind::Money, Unit::Dollars) if !m.per_mile => 2,
        (SlotKind::Miles, Unit::Miles) => 2,
        (SlotKind::Months, Unit::Months) => 2,
        (SlotKind::Money | SlotKind::Miles | SlotKind::Count, Unit::Bare) => 1,
        (SlotKind::Months | SlotKind::Rate, Unit::Bare) => 1,
        _ => 0,
    }
}

/// Cue words per slot; by default the template's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRule {
    pub slot: String,
    pub cues: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    rules: Option<Vec<SlotRule>>,
}

impl ScriptedBackend {
    /// Uses the cue lists declared by each session's template.
    pub fn new() -> Self {
        Self { rules: None }
    }

    pub fn with_rules(rules: Vec<SlotRule>) -> Self {
        Self { rules: Some(rules) }
    }

    fn cues<'a>(&'a self, slot: &'a SlotSpec) -> &'a [String] {
        match &self.rules {
            Some(rules) => rules
                .iter()
                .find(|r| r.slot == slot.name)
                .map(|r| r.cues.as_slice())
                .unwrap_or(&[]),
            None => &slot.cues,
        }
    }
}

/// Nearest cue distance from mention to a cue of `slot` inside the clause, if any.
fn cue_distance(clause: &str, offset: usize, m: &Mention, cues: &[String]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for cue in cues {
        let cue = cue.to_lowercase();
        for pos in cue_positions(clause, &cue) {
            let (a, b) = (offset + pos, offset + pos + cue.len());
            if a < m.end && b > m.start {
                continue;
            }
            let d = if b <= m.start { m.start - b } else { a - m.end };
            best = Some(best.map_or(d, |x| x.min(d)));
        }
    }
    best
}

pub(crate) fn extract_with(
    template: &Template,
    cues_of: impl Fn(&SlotSpec) -> Vec<String>,
    state: &DialogState,
    utterance: &str,
) -> Vec<Candidate> {
    let lower = utterance.to_lowercase();
    // byte offsets only line up when lowercasing preserved lengths
    let lower = if lower.len() == utterance.len() {
        lower
    } else {
        utterance.to_ascii_lowercase()
    };
    let spans = clauses(utterance);
    let asked = state.asked_slot();
    let mut out: Vec<Candidate> = Vec::new();
    let taken = |out: &Vec<Candidate>, slot: &str| out.iter().any(|c| c.slot == slot);

    for m in mentions(utterance) {
        let (cs, ce) = spans
            .iter()
            .copied()
            .find(|&(s, e)| m.start >= s && m.start < e)
            .unwrap_or((0, utterance.len()));
        let clause = &lower[cs..ce];

        let mut cued: Vec<(usize, &SlotSpec, u8)> = template
            .slots
            .iter()
            .filter(|s| !taken(&out, &s.name))
            .filter_map(|s| {
                let fit = unit_fit(s.kind, &m);
                if fit == 0 {
                    return None;
                }
                cue_distance(clause, cs, &m, &cues_of(s)).map(|d| (d, s, fit))
            })
            .collect();
        cued.sort_by_key(|&(d, s, fit)| (std::cmp::Reverse(fit), d, s.name.clone()));

        let pick = match cued.as_slice() {
            [] => None,
            [(_, s, fit)] => Some((*s, if *fit == 2 { 1.0 } else { 0.9 })),
            [(d0, s0, f0), (d1, _, f1), ..] => {
                let clear = f0 > f1 || d0 < d1;
                let conf = match (clear, *f0) {
                    (true, 2) => 1.0,
                    (true, _) => 0.9,
                    (false, _) => 0.5,
                };
                Some((*s0, conf))
            }
        };
        let pick = pick.or_else(|| {
            // no cue: answer to the question just asked
            let slot = asked.and_then(|name| template.slot(name)).filter(|s| !taken(&out, &s.name))?;
            match unit_fit(slot.kind, &m) {
                2 => Some((slot, 1.0)),
                1 if matches!(slot.kind, SlotKind::Money | SlotKind::Miles | SlotKind::Count) => Some((slot, 0.9)),
                1 => Some((slot, 0.5)),
                _ => None,
            }
        });
        let pick = pick.or_else(|| {
            // the only open slot this unit can mean
            if m.unit == Unit::Bare {
                return None;
            }
            let mut open = template
                .slots
                .iter()
                .filter(|s| !state.is_filled(&s.name) && !taken(&out, &s.name))
                .filter(|s| unit_fit(s.kind, &m) == 2);
            match (open.next(), open.next()) {
                (Some(s), None) => Some((s, 0.7)),
                _ => None,
            }
        });
        if let Some((slot, confidence)) = pick {
            out.push(Candidate {
                slot: slot.name.clone(),
                value: m.value,
                raw: m.raw.clone(),
                confidence,
            });
        }
    }
    out
}

impl AgentBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn extract(&self, state: &DialogState, utterance: &str) -> Result<Vec<Candidate>, BackendError> {
        let template = state.template();
        Ok(extract_with(template, |s| self.cues(s).to_vec(), state, utterance))
    }
}
