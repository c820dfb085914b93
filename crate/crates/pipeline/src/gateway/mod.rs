//! One entry point for every model call: prompt rendering, rate limiting,
//! retries, the research-agent tool loop, answer extraction and transcripts.

mod limiter;
pub mod live;
pub mod mock;
mod react;
pub mod tools;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendConfig, BackendKind, Config};
use crate::parse::{extract_fields, last_number, parse_items};
use crate::prompts::{render, AnswerShape, Artifact, TemplateId};

pub use limiter::Limiter;
pub use tools::{MockTools, NoTools, Tools};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mode {
    Completion,
    /// A ReAct loop allowed at most `budget` tool calls.
    ResearchAgent { budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRequest {
    pub backend_id: String,
    pub mode: Mode,
    pub template: TemplateId,
    pub artifacts: Vec<Artifact>,
    pub fake_now: Option<DateTime<Utc>>,
}

impl AgentRequest {
    pub fn completion(backend_id: &str, template: TemplateId, artifacts: Vec<Artifact>) -> Self {
        Self {
            backend_id: backend_id.to_string(),
            mode: Mode::Completion,
            template,
            artifacts,
            fake_now: None,
        }
    }

    pub fn research(backend_id: &str, template: TemplateId, artifacts: Vec<Artifact>, budget: usize) -> Self {
        Self {
            mode: Mode::ResearchAgent { budget },
            ..Self::completion(backend_id, template, artifacts)
        }
    }

    pub fn with_fake_now(mut self, now: Option<DateTime<Utc>>) -> Self {
        self.fake_now = now;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Tool calls made by a research agent.
    pub steps: usize,
    /// Chat calls, including retries and the reprompt.
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponse {
    pub text: String,
    pub fields: BTreeMap<String, String>,
    /// Parsed items for list-shaped templates.
    pub items: Vec<BTreeMap<String, String>>,
    pub transcript_ref: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: ChatRole,
    pub content: String,
}

impl Message {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// One chat call as seen by a backend.
#[derive(Debug, Clone)]
pub struct ChatCall<'a> {
    pub backend_id: &'a str,
    pub config: &'a BackendConfig,
    pub template: TemplateId,
    pub messages: &'a [Message],
    /// Digest of the rendered prompt, stable across steps of one request.
    pub prompt_digest: &'a str,
    pub step: usize,
    pub research: bool,
    pub reprompt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("transient failure: {0}")]
    Retryable(String),
    #[error("fatal failure: {0}")]
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn chat(&self, call: &ChatCall<'_>) -> Result<ChatReply, TransportError>;
    fn embed(&self, backend_id: &str, config: &BackendConfig, texts: &[String]) -> Result<Vec<Vec<f32>>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown backend {0}")]
    UnknownBackend(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("backend {backend} unavailable: {message}")]
    BackendUnavailable { backend: String, message: String },
    #[error("{template} reply unreadable after reprompt: {detail}")]
    ParseFailure {
        template: TemplateId,
        detail: String,
        transcript_ref: String,
    },
    #[error("research agent used its {budget} tool steps without a final answer")]
    BudgetExhausted { budget: usize, transcript_ref: String },
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::UnknownBackend(_) => "unknown_backend",
            GatewayError::Precondition(_) => "precondition",
            GatewayError::BackendUnavailable { .. } => "backend_unavailable",
            GatewayError::ParseFailure { .. } => "parse_failure",
            GatewayError::BudgetExhausted { .. } => "budget_exhausted",
        }
    }
}

/// Call counters keyed by backend, template and mode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallStats {
    pub requests: BTreeMap<(String, String, &'static str), usize>,
    pub embed_batches: BTreeMap<String, usize>,
}

impl CallStats {
    pub fn requests_for(&self, template: TemplateId) -> usize {
        self.requests
            .iter()
            .filter(|((_, t, _), _)| t == template.as_str())
            .map(|(_, n)| n)
            .sum()
    }

    pub fn requests_by(&self, backend: &str, template: TemplateId) -> usize {
        self.requests
            .iter()
            .filter(|((b, t, _), _)| b == backend && t == template.as_str())
            .map(|(_, n)| n)
            .sum()
    }

    pub fn research_requests(&self) -> usize {
        self.requests
            .iter()
            .filter(|((_, _, m), _)| *m == "research_agent")
            .map(|(_, n)| n)
            .sum()
    }
}

struct Slot {
    config: BackendConfig,
    backend: Arc<dyn Backend>,
    limiter: Limiter,
}

pub struct Gateway {
    slots: BTreeMap<String, Slot>,
    tools: Arc<dyn Tools>,
    transcripts: PathBuf,
    stats: Mutex<CallStats>,
}

impl Gateway {
    pub fn new(transcripts: impl Into<PathBuf>, tools: Arc<dyn Tools>) -> Self {
        Self {
            slots: BTreeMap::new(),
            tools,
            transcripts: transcripts.into(),
            stats: Mutex::new(CallStats::default()),
        }
    }

    pub fn register(&mut self, id: &str, config: BackendConfig, backend: Arc<dyn Backend>) {
        let limiter = Limiter::new(config.max_in_flight(), config.rpm());
        self.slots.insert(
            id.to_string(),
            Slot {
                config,
                backend,
                limiter,
            },
        );
    }

    /// Builds a gateway for every configured backend. Mock backends share one
    /// fixture set; live backends get an HTTP transport.
    pub fn from_config(cfg: &Config, transcripts: &Path) -> Result<Self, crate::config::ConfigError> {
        let fixture_paths: Vec<PathBuf> = cfg.mock.fixtures.iter().map(|p| cfg.resolve_path(p)).collect();
        let needs_mock = cfg.backends.values().any(|b| b.kind == BackendKind::Mock);
        let mock = if needs_mock {
            let m = mock::MockBackend::load(&fixture_paths, cfg.mock.embedding_dim.unwrap_or(mock::DEFAULT_DIM))
                .map_err(|e| crate::config::ConfigError::Invalid(e.to_string()))?;
            Some(Arc::new(m))
        } else {
            None
        };
        let tools: Arc<dyn Tools> = match &mock {
            Some(m) if cfg.tools.search_endpoint.is_none() => Arc::new(m.tools()),
            _ => Arc::new(tools::LiveTools::from_config(&cfg.tools)),
        };
        let mut gw = Gateway::new(transcripts, tools);
        for (id, b) in &cfg.backends {
            let backend: Arc<dyn Backend> = match b.kind {
                BackendKind::Mock => mock.clone().expect("mock loaded"),
                BackendKind::Openai => Arc::new(live::LiveBackend::new(Arc::new(live::UreqTransport))),
            };
            gw.register(id, b.clone(), backend);
        }
        Ok(gw)
    }

    pub fn stats(&self) -> CallStats {
        self.stats.lock().expect("stats lock").clone()
    }

    pub fn backend_ids(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    fn slot(&self, id: &str) -> Result<&Slot, GatewayError> {
        self.slots
            .get(id)
            .ok_or_else(|| GatewayError::UnknownBackend(id.to_string()))
    }

    pub fn execute(&self, req: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        let slot = self.slot(&req.backend_id)?;
        if let Mode::ResearchAgent { budget: 0 } = req.mode {
            return Err(GatewayError::Precondition(
                "research agent budget must be at least 1".into(),
            ));
        }
        {
            let mut stats = self.stats.lock().expect("stats lock");
            let mode = match req.mode {
                Mode::Completion => "completion",
                Mode::ResearchAgent { .. } => "research_agent",
            };
            *stats
                .requests
                .entry((req.backend_id.clone(), req.template.as_str().to_string(), mode))
                .or_default() += 1;
        }

        let prompt = render(req.template, &req.artifacts, req.fake_now);
        let digest = prompt.digest();
        let mut session = Session {
            gateway: self,
            slot,
            req,
            digest: &digest,
            transcript: Transcript::new(req, &digest),
            usage: Usage::default(),
            step: 0,
        };
        let mut messages = vec![
            Message::new(ChatRole::System, prompt.system.clone()),
            Message::new(ChatRole::User, prompt.user.clone()),
        ];
        session.transcript.message(&messages[0]);
        let outcome = session.run(&mut messages);
        let transcript_ref = session.transcript.persist(&self.transcripts);
        let usage = session.usage;
        match outcome {
            Ok(mut r) => {
                r.transcript_ref = transcript_ref;
                r.usage = usage;
                Ok(r)
            }
            Err(mut e) => {
                match &mut e {
                    GatewayError::ParseFailure { transcript_ref: t, .. }
                    | GatewayError::BudgetExhausted { transcript_ref: t, .. } => *t = transcript_ref,
                    _ => {}
                }
                Err(e)
            }
        }
    }

    /// Embeds `texts` in batches of `batch_size`; order is preserved.
    pub fn embed(&self, backend_id: &str, texts: &[String], batch_size: usize) -> Result<Vec<Vec<f32>>, GatewayError> {
        let slot = self.slot(backend_id)?;
        if texts.is_empty() {
            return Err(GatewayError::Precondition("nothing to embed".into()));
        }
        if batch_size == 0 {
            return Err(GatewayError::Precondition("batch size must be positive".into()));
        }
        let batches: Vec<&[String]> = texts.chunks(batch_size).collect();
        *self
            .stats
            .lock()
            .expect("stats lock")
            .embed_batches
            .entry(backend_id.to_string())
            .or_default() += batches.len();
        let results: Vec<Result<Vec<Vec<f32>>, GatewayError>> = batches
            .par_iter()
            .map(|batch| {
                with_retries(&slot.config, backend_id, |_| {
                    let _permit = slot.limiter.acquire();
                    let out = slot.backend.embed(backend_id, &slot.config, batch)?;
                    if out.len() != batch.len() {
                        return Err(TransportError::Fatal(format!(
                            "{} vectors for {} texts",
                            out.len(),
                            batch.len()
                        )));
                    }
                    Ok(out)
                })
            })
            .collect();
        let mut all = Vec::with_capacity(texts.len());
        for r in results {
            all.extend(r?);
        }
        let dim = all[0].len();
        if all.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(GatewayError::BackendUnavailable {
                backend: backend_id.to_string(),
                message: "embedding vectors are ragged or non-finite".into(),
            });
        }
        Ok(all)
    }
}

fn with_retries<T>(
    config: &BackendConfig,
    backend_id: &str,
    mut attempt: impl FnMut(u32) -> Result<T, TransportError>,
) -> Result<T, GatewayError> {
    let mut i = 0;
    loop {
        match attempt(i) {
            Ok(v) => return Ok(v),
            Err(TransportError::Retryable(msg)) if i < config.max_retries => {
                let wait = config.backoff_ms().saturating_mul(4u64.saturating_pow(i));
                tracing::warn!(backend = backend_id, attempt = i + 1, wait_ms = wait, "{msg}");
                if wait > 0 {
                    std::thread::sleep(Duration::from_millis(wait));
                }
                i += 1;
            }
            Err(e) => {
                return Err(GatewayError::BackendUnavailable {
                    backend: backend_id.to_string(),
                    message: e.to_string(),
                })
            }
        }
    }
}

struct Session<'a> {
    gateway: &'a Gateway,
    slot: &'a Slot,
    req: &'a AgentRequest,
    digest: &'a str,
    transcript: Transcript,
    usage: Usage,
    step: usize,
}

impl Session<'_> {
    fn chat(&mut self, messages: &[Message], reprompt: bool) -> Result<String, GatewayError> {
        let research = matches!(self.req.mode, Mode::ResearchAgent { .. });
        let step = self.step;
        self.step += 1;
        let slot = self.slot;
        let req = self.req;
        let digest = self.digest;
        let mut calls = 0;
        let result = with_retries(&slot.config, &req.backend_id, |_| {
            calls += 1;
            let _permit = slot.limiter.acquire();
            slot.backend.chat(&ChatCall {
                backend_id: &req.backend_id,
                config: &slot.config,
                template: req.template,
                messages,
                prompt_digest: digest,
                step,
                research,
                reprompt,
            })
        });
        self.usage.calls += calls;
        match result {
            Ok(reply) => {
                self.usage.prompt_tokens += reply.prompt_tokens;
                self.usage.completion_tokens += reply.completion_tokens;
                self.transcript.section(&format!("assistant (step {step})"), &reply.text);
                Ok(reply.text)
            }
            Err(e) => {
                self.transcript.section("error", &e.to_string());
                Err(e)
            }
        }
    }

    fn run(&mut self, messages: &mut Vec<Message>) -> Result<AgentResponse, GatewayError> {
        if let Mode::ResearchAgent { .. } = self.req.mode {
            messages[1].content.push_str(&react::protocol());
        }
        self.transcript.message(&messages[1]);
        let text = match self.req.mode {
            Mode::Completion => self.chat(messages, false)?,
            Mode::ResearchAgent { budget } => react::run_loop(self, messages, budget)?,
        };
        match extract(self.req.template, &text) {
            Ok((fields, items)) => Ok(self.response(text, fields, items)),
            Err(problem) => {
                messages.push(Message::new(ChatRole::Assistant, text));
                let reminder = self.req.template.reminder(&problem);
                let reminder_msg = Message::new(ChatRole::User, reminder);
                self.transcript.message(&reminder_msg);
                messages.push(reminder_msg);
                let text = self.chat(messages, true)?;
                match extract(self.req.template, &text) {
                    Ok((fields, items)) => Ok(self.response(text, fields, items)),
                    Err(problem) => {
                        self.transcript.section("parse failure", &problem.join(", "));
                        Err(GatewayError::ParseFailure {
                            template: self.req.template,
                            detail: problem.join(", "),
                            transcript_ref: String::new(),
                        })
                    }
                }
            }
        }
    }

    fn response(
        &self,
        text: String,
        fields: BTreeMap<String, String>,
        items: Vec<BTreeMap<String, String>>,
    ) -> AgentResponse {
        AgentResponse {
            text,
            fields,
            items,
            transcript_ref: String::new(),
            usage: Usage::default(),
        }
    }
}

type Extracted = (BTreeMap<String, String>, Vec<BTreeMap<String, String>>);

/// Pulls the declared answer out of a reply, or names what is missing.
fn extract(template: TemplateId, text: &str) -> Result<Extracted, Vec<String>> {
    match template.shape() {
        AnswerShape::FreeText => {
            if text.trim().is_empty() {
                Err(vec!["answer text".into()])
            } else {
                Ok((BTreeMap::new(), Vec::new()))
            }
        }
        AnswerShape::Items(labels) => match parse_items(text, labels) {
            Ok(items) => Ok((BTreeMap::new(), items)),
            Err(e) => Err(vec![e.to_string()]),
        },
        AnswerShape::Fields(names) => {
            let (mut fields, mut missing) = extract_fields(text, names);
            if let Some(f) = template.numeric_fallback() {
                if missing.iter().any(|m| m == f) {
                    if let Some(n) = last_number(text) {
                        fields.insert(f.to_string(), n);
                        missing.retain(|m| m != f);
                    }
                }
            }
            if missing.is_empty() {
                Ok((fields, Vec::new()))
            } else {
                Err(missing)
            }
        }
    }
}

/// Full log of one request. Its name is the digest of its content, so
/// identical runs write identical files.
struct Transcript {
    body: String,
}

impl Transcript {
    fn new(req: &AgentRequest, digest: &str) -> Self {
        let mode = match req.mode {
            Mode::Completion => "completion".to_string(),
            Mode::ResearchAgent { budget } => format!("research_agent budget={budget}"),
        };
        Self {
            body: format!(
                "backend: {}\ntemplate: {}\nmode: {}\nprompt_digest: {}\n",
                req.backend_id, req.template, mode, digest
            ),
        }
    }

    fn message(&mut self, m: &Message) {
        let label = match m.role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        self.section(label, &m.content);
    }

    fn section(&mut self, label: &str, text: &str) {
        self.body.push_str(&format!("\n=== {label}\n{text}\n"));
    }

    fn persist(&self, dir: &Path) -> String {
        let name = format!(
            "{}.log",
            &ffoundry_core::ids::sha256_hex(self.body.as_bytes())[..16]
        );
        let path = dir.join(&name);
        if !path.exists() {
            if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| crate::rundir::write_atomic(&path, self.body.as_bytes())) {
                tracing::error!("cannot write transcript {}: {e}", path.display());
            }
        }
        format!("transcripts/{name}")
    }
}
