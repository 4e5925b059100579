//! Control prompts and chat-completion backends.
//!
//! A [`PromptBundle`] carries a system prompt rendered from a template with
//! exactly one control code, the dialogue history, and sampling parameters.
//! [`Gateway::complete`] sends it to a model and returns the raw generation
//! together with a clean text where the control codes were removed.
//!
//! [`OpenAiGateway`] speaks the usual `/chat/completions` JSON shape.
//! [`MockGateway`] answers in-process from scripted replies, and
//! [`mock_router`] serves the same replies over HTTP for end-to-end tests.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::{control_code, strip_detailed, wrap};
use crate::http::{self, PostError};
use crate::ontology::OntologySpec;
use crate::resources;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown class `{class}` for concept `{concept}`")]
    UnknownClass { concept: String, class: String },
    #[error("template `{id}` must contain `{{control_code}}` exactly once")]
    BadTemplate { id: String },
    #[error("invalid template file: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Message {
            role: Role::Agent,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.0,
            max_tokens: 256,
            seed: Some(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub concept: String,
    pub class: String,
    pub template_id: String,
    pub system: String,
    pub history: Vec<Message>,
    pub params: SamplingParams,
}

impl PromptBundle {
    pub fn control_code(&self) -> String {
        control_code(&self.concept, &self.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub system: String,
}

/// Prompt templates plus one-sentence concept glosses.
///
/// Placeholders: `{control_code}`, `{concept}`, `{class}`, `{gloss}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub version: u32,
    #[serde(default)]
    pub glosses: BTreeMap<String, String>,
    pub templates: Vec<Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::parse(resources::TEMPLATES).expect("bundled templates are valid")
    }
}

impl TemplateSet {
    pub fn parse(document: &str) -> Result<Self, PromptError> {
        let set: TemplateSet =
            serde_json::from_str(document).map_err(|e| PromptError::Syntax(e.to_string()))?;
        for t in &set.templates {
            if t.system.matches("{control_code}").count() != 1 {
                return Err(PromptError::BadTemplate { id: t.id.clone() });
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&Template, PromptError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(|t| t.id.as_str())
    }

    /// Renders the system prompt for the given concept and class.
    pub fn render(&self, id: &str, concept: &str, class: &str) -> Result<String, PromptError> {
        let t = self.get(id)?;
        let gloss = self.glosses.get(concept).map(String::as_str).unwrap_or("");
        Ok(t.system
            .replace("{gloss}", gloss)
            .replace("{concept}", concept)
            .replace("{class}", class)
            .replace("{control_code}", &control_code(concept, class)))
    }
}

/// Renders a template for `target` and attaches the history.
pub fn build_control_prompt(
    history: &[Message],
    target: &str,
    spec: &OntologySpec,
    templates: &TemplateSet,
    template_id: &str,
    params: SamplingParams,
) -> Result<PromptBundle, PromptError> {
    if !spec.has_class(target) {
        return Err(PromptError::UnknownClass {
            concept: spec.concept.clone(),
            class: target.to_string(),
        });
    }
    let system = templates.render(template_id, &spec.concept, target)?;
    Ok(PromptBundle {
        concept: spec.concept.clone(),
        class: target.to_string(),
        template_id: template_id.to_string(),
        system,
        history: history.to_vec(),
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub raw: String,
    pub clean: String,
    /// The model also produced the trailing control code.
    pub right_label: bool,
    pub latency_ms: u64,
    pub request_id: String,
}

impl Generation {
    pub fn from_raw(raw: String, concept: &str, latency_ms: u64, request_id: String) -> Self {
        let s = strip_detailed(&raw, concept);
        let clean = scrub_codes(&s.text, concept);
        Generation {
            raw,
            clean,
            right_label: s.right_label,
            latency_ms,
            request_id,
        }
    }
}

/// Removes stray control codes of `concept` left inside a text.
pub fn scrub_codes(text: &str, concept: &str) -> String {
    let re = Regex::new(&format!(r"\[\s*{}\s*:[^\]]*\]", regex::escape(concept)))
        .expect("escaped pattern");
    if !re.is_match(text) {
        return text.to_string();
    }
    let replaced = re.replace_all(text, " ");
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "status")]
pub enum GatewayErrorKind {
    Timeout,
    Http(u16),
    Malformed,
    Transport,
}

impl fmt::Display for GatewayErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GatewayErrorKind::Timeout => f.write_str("timeout"),
            GatewayErrorKind::Http(s) => write!(f, "http {s}"),
            GatewayErrorKind::Malformed => f.write_str("malformed response"),
            GatewayErrorKind::Transport => f.write_str("transport"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("gateway {kind} (request {request_id}): {message}")]
pub struct GatewayError {
    /// Serialized inline: `{"kind": "http", "status": 500, ...}`.
    #[serde(flatten)]
    pub kind: GatewayErrorKind,
    pub request_id: String,
    pub message: String,
}

/// A chat-completion backend.
pub trait Gateway: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<Generation, GatewayError>;

    /// Identifies the endpoint in evaluation reports.
    fn endpoint_id(&self) -> String;
}

/// The request body of the chat-completions wire protocol.
pub fn chat_request(model: &str, bundle: &PromptBundle) -> Value {
    let mut messages = vec![json!({"role": "system", "content": bundle.system})];
    for m in &bundle.history {
        let role = match m.role {
            Role::User => "user",
            Role::Agent => "assistant",
        };
        messages.push(json!({"role": role, "content": m.text}));
    }
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": bundle.params.temperature,
        "max_tokens": bundle.params.max_tokens,
    });
    if let Some(seed) = bundle.params.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Client for any OpenAI-compatible chat-completions endpoint.
///
/// `url` is the full endpoint, e.g. `http://localhost:8000/v1/chat/completions`.
pub struct OpenAiGateway {
    url: String,
    key: Option<String>,
    model: String,
    timeout_retries: u32,
    agent: ureq::Agent,
    counter: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("environment variable ONTO_LLM_URL is not set")]
pub struct MissingEndpoint;

impl OpenAiGateway {
    pub fn new(url: impl Into<String>, key: Option<String>, model: impl Into<String>, timeout: Duration) -> Self {
        OpenAiGateway {
            url: url.into(),
            key,
            model: model.into(),
            timeout_retries: 1,
            agent: http::agent(timeout),
            counter: AtomicU64::new(0),
        }
    }

    /// Reads `ONTO_LLM_URL`, `ONTO_LLM_KEY`, `ONTO_LLM_MODEL`,
    /// `ONTO_LLM_TIMEOUT_MS` and `ONTO_LLM_RETRIES`.
    pub fn from_env() -> Result<Self, MissingEndpoint> {
        let url = std::env::var("ONTO_LLM_URL")
            .ok()
            .filter(|u| !u.is_empty())
            .ok_or(MissingEndpoint)?;
        let key = std::env::var("ONTO_LLM_KEY").ok().filter(|k| !k.is_empty());
        let model = std::env::var("ONTO_LLM_MODEL").unwrap_or_else(|_| "default".into());
        let timeout = Duration::from_millis(http::env_u64("ONTO_LLM_TIMEOUT_MS", 60_000));
        Ok(Self::new(url, key, model, timeout)
            .with_timeout_retries(http::env_u64("ONTO_LLM_RETRIES", 1) as u32))
    }

    pub fn with_timeout_retries(mut self, n: u32) -> Self {
        self.timeout_retries = n;
        self
    }

    fn next_request_id(&self) -> String {
        format!("req-{:06}", self.counter.fetch_add(1, Ordering::Relaxed) + 1)
    }

    fn attempt(&self, body: &[u8], request_id: &str) -> Result<String, GatewayError> {
        let auth = self.key.as_ref().map(|k| format!("Bearer {k}"));
        let mut headers = vec![("x-request-id", request_id)];
        if let Some(a) = &auth {
            headers.push(("authorization", a.as_str()));
        }
        let err = |kind, message: String| GatewayError {
            kind,
            request_id: request_id.to_string(),
            message,
        };
        let value = http::post_json(&self.agent, &self.url, &headers, body).map_err(|e| match e {
            PostError::Timeout => err(GatewayErrorKind::Timeout, e.to_string()),
            PostError::Status(s, ref b) => err(GatewayErrorKind::Http(s), truncate(b, 200)),
            PostError::Transport(m) => err(GatewayErrorKind::Transport, m),
            PostError::Decode(m) => err(GatewayErrorKind::Malformed, m),
        })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                err(
                    GatewayErrorKind::Malformed,
                    "missing choices[0].message.content".into(),
                )
            })
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

impl Gateway for OpenAiGateway {
    fn complete(&self, bundle: &PromptBundle) -> Result<Generation, GatewayError> {
        let body = serde_json::to_vec(&chat_request(&self.model, bundle)).expect("request serializes");
        let started = Instant::now();
        let mut tries = 0;
        loop {
            let request_id = self.next_request_id();
            match self.attempt(&body, &request_id) {
                Ok(raw) => {
                    let ms = started.elapsed().as_millis() as u64;
                    return Ok(Generation::from_raw(raw, &bundle.concept, ms, request_id));
                }
                Err(e) if e.kind == GatewayErrorKind::Timeout && tries < self.timeout_retries => {
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn endpoint_id(&self) -> String {
        format!("{} ({})", self.url, self.model)
    }
}

type Responder = dyn Fn(&PromptBundle) -> Result<String, GatewayErrorKind> + Send + Sync;

/// Deterministic in-process gateway.
#[derive(Clone)]
pub struct MockGateway {
    name: String,
    responder: Arc<Responder>,
    counter: Arc<AtomicU64>,
}

impl fmt::Debug for MockGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockGateway").field("name", &self.name).finish()
    }
}

/// Scripted replies per class, shared by [`MockGateway`] and [`mock_router`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub concept: String,
    /// Answer like a fine-tuned model: reply wrapped in control codes.
    #[serde(default)]
    pub wrap: bool,
    pub replies: BTreeMap<String, String>,
}

impl MockFixture {
    pub fn parse(document: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(document)
    }

    pub fn cefr() -> Self {
        Self::parse(resources::MOCK_CEFR_FIXTURE).expect("bundled fixture is valid")
    }

    pub fn polarity() -> Self {
        Self::parse(resources::MOCK_POLARITY_FIXTURE).expect("bundled fixture is valid")
    }

    /// Bundled fixture for a concept, if one ships.
    pub fn bundled(concept: &str) -> Option<Self> {
        [Self::cefr(), Self::polarity()]
            .into_iter()
            .find(|f| f.concept == concept)
    }

    pub fn reply(&self, class: &str) -> Option<String> {
        let text = self.replies.get(class)?;
        Some(if self.wrap {
            wrap(text, &self.concept, class).unwrap_or_else(|_| text.clone())
        } else {
            text.clone()
        })
    }
}

impl MockGateway {
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&PromptBundle) -> Result<String, GatewayErrorKind> + Send + Sync + 'static,
    {
        MockGateway {
            name: name.into(),
            responder: Arc::new(f),
            counter: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Replies with the fixture text of the requested class.
    pub fn from_fixture(fixture: MockFixture) -> Self {
        let name = format!("mock:{}", fixture.concept);
        Self::from_fn(name, move |b| fixture.reply(&b.class).ok_or(GatewayErrorKind::Malformed))
    }

    /// Always replies with the same text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_fn("mock:constant", move |_| Ok(text.clone()))
    }

    /// Always fails with `kind`.
    pub fn failing(kind: GatewayErrorKind) -> Self {
        Self::from_fn("mock:failing", move |_| Err(kind))
    }
}

impl Gateway for MockGateway {
    fn complete(&self, bundle: &PromptBundle) -> Result<Generation, GatewayError> {
        let request_id = format!("mock-{:06}", self.counter.fetch_add(1, Ordering::Relaxed) + 1);
        match (self.responder)(bundle) {
            Ok(raw) => Ok(Generation::from_raw(raw, &bundle.concept, 0, request_id)),
            Err(kind) => Err(GatewayError {
                kind,
                request_id,
                message: "scripted failure".into(),
            }),
        }
    }

    fn endpoint_id(&self) -> String {
        self.name.clone()
    }
}

/// Chat-completions server answering from a fixture: the class is read from
/// the control code in the system message. Mounted at `/v1/chat/completions`
/// and `/`.
pub fn mock_router(fixture: MockFixture) -> Router {
    let state = Arc::new(fixture);
    Router::new()
        .route("/", post(mock_completion))
        .route("/v1/chat/completions", post(mock_completion))
        .with_state(state)
}

async fn mock_completion(
    State(fixture): State<Arc<MockFixture>>,
    Json(req): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let code = Regex::new(&format!(
        r"\[\s*{}\s*:\s*([^\]]*?)\s*\]",
        regex::escape(&fixture.concept)
    ))
    .expect("escaped pattern");
    let system = req
        .get("messages")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter(|m| m.get("role").and_then(Value::as_str) == Some("system"))
        .filter_map(|m| m.get("content").and_then(Value::as_str))
        .collect::<Vec<_>>()
        .join("\n");
    let Some(class) = code.captures(&system).map(|c| c[1].to_string()) else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "no control code in system message"})),
        );
    };
    let Some(reply) = fixture.reply(&class) else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": format!("no reply scripted for class `{class}`")})),
        );
    };
    (
        StatusCode::OK,
        Json(json!({
            "id": "mock",
            "object": "chat.completion",
            "model": req.get("model").cloned().unwrap_or(Value::Null),
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": reply},
                "finish_reason": "stop"
            }]
        })),
    )
}
