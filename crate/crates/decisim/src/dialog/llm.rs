//! Chat-completion extraction backend.
//!
//! Request (OpenAI-style wire format):
//! `{"model": ..., "temperature": 0, "messages": [{"role": "system", ...}, {"role": "user", ...}]}`.
//! The assistant is asked for one JSON object `{slot: number}` or
//! `{slot: {"value": number, "confidence": number}}`. Anything else, prose
//! included, yields no candidates. Questions come from the template prompts.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::template::{SlotKind, Template};
use super::{AgentBackend, BackendError, Candidate, DialogState};

/// Confidence given to bare numeric answers.
const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

/// Sends a chat request and returns the assistant message text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
}

impl LlmConfig {
    /// `DECISIM_LLM_ENDPOINT`, `DECISIM_LLM_MODEL`, `DECISIM_LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("DECISIM_LLM_ENDPOINT").ok()?;
        let api_key = std::env::var("DECISIM_LLM_API_KEY").ok()?;
        let model = std::env::var("DECISIM_LLM_MODEL").unwrap_or_else(|_| "gpt-4".to_string());
        Some(Self { endpoint, model, api_key })
    }
}

pub struct LlmBackend {
    model: String,
    transport: Box<dyn ChatTransport>,
}

impl LlmBackend {
    pub fn new(model: &str, transport: Box<dyn ChatTransport>) -> Self {
        Self {
            model: model.to_string(),
            transport,
        }
    }

    #[cfg(feature = "llm")]
    pub fn from_config(config: LlmConfig) -> Self {
        let model = config.model.clone();
        Self::new(&model, Box::new(HttpTransport::new(config)))
    }

    pub fn request(&self, template: &Template, utterance: &str) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            temperature: 0.0,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: system_prompt(template),
                },
                ChatMessage {
                    role: "user".into(),
                    content: utterance.to_string(),
                },
            ],
        }
    }
}

fn unit_hint(kind: SlotKind) -> &'static str {
    match kind {
        SlotKind::Money => "US dollars",
        SlotKind::Rate => "US dollars per mile (15 cents = 0.15)",
        SlotKind::Months => "months (years x 12)",
        SlotKind::Miles => "miles per year",
        SlotKind::Count => "a plain number",
    }
}

fn system_prompt(template: &Template) -> String {
    let mut p = String::from(
        "Extract values the user states for the slots below. Reply with ONLY a JSON object mapping slot \
         names to numbers in the given unit. Omit slots the user did not mention. Never add other keys.\n\nSlots:\n",
    );
    for s in &template.slots {
        p.push_str(&format!("- {} ({}): {}\n", s.name, unit_hint(s.kind), s.prompt));
    }
    p
}

/// Candidates from an assistant reply; malformed replies give none.
pub fn parse_reply(template: &Template, reply: &str) -> Vec<Candidate> {
    let body = reply.trim();
    let body = body
        .strip_prefix("```json")
        .or_else(|| body.strip_prefix("```"))
        .and_then(|b| b.strip_suffix("```"))
        .unwrap_or(body)
        .trim();
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(body) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for slot in &template.slots {
        let Some(v) = map.get(&slot.name) else { continue };
        let (value, confidence) = match v {
            Value::Number(n) => (n.as_f64(), DEFAULT_CONFIDENCE),
            Value::Object(o) => (
                o.get("value").and_then(Value::as_f64),
                o.get("confidence").and_then(Value::as_f64).unwrap_or(DEFAULT_CONFIDENCE),
            ),
            _ => (None, 0.0),
        };
        if let Some(value) = value.filter(|x| x.is_finite()) {
            out.push(Candidate {
                slot: slot.name.clone(),
                value,
                raw: v.to_string(),
                confidence: confidence.clamp(0.0, 1.0),
            });
        }
    }
    out
}

impl AgentBackend for LlmBackend {
    fn name(&self) -> &str {
        "llm"
    }

    fn extract(&self, state: &DialogState, utterance: &str) -> Result<Vec<Candidate>, BackendError> {
        let reply = self.transport.complete(&self.request(state.template(), utterance))?;
        Ok(parse_reply(state.template(), &reply))
    }
}

#[cfg(feature = "llm")]
pub struct HttpTransport {
    config: LlmConfig,
    agent: ureq::Agent,
}

#[cfg(feature = "llm")]
impl HttpTransport {
    pub fn new(config: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .build()
            .into();
        Self { config, agent }
    }
}

#[cfg(feature = "llm")]
impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let unreachable = |e: ureq::Error| BackendError::Unreachable(e.to_string());
        let body: Value = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(request)
            .map_err(unreachable)?
            .body_mut()
            .read_json()
            .map_err(unreachable)?;
        Ok(body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string())
    }
}
