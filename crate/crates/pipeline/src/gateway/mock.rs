//! Deterministic offline backend driven by TOML fixture files.
//!
//! ```toml
//! [[response]]
//! template = "forecast"
//! match = ["Will the ECB cut"]
//! text = "final_answer_forecast: 35"
//!
//! [[tool]]
//! action = "web_search"
//! match = ["ECB"]
//! text = "ECB holds rates at 2%."
//! ```
//!
//! A rule applies when its template matches, its `backend` (if any) names the
//! calling backend, its `prompt_sha` (if any) equals the rendered-prompt
//! digest and every `match` substring occurs in the user prompt. The most
//! specific rule wins: exact digest first, then more substrings, then a named
//! backend; remaining ties go to the earliest rule.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::tools::{MockTools, ToolRule};
use super::{Backend, ChatCall, ChatReply, ChatRole, TransportError};
use crate::config::BackendConfig;

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRule {
    pub template: String,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default, rename = "match")]
    pub matches: Vec<String>,
    #[serde(default)]
    pub prompt_sha: Option<String>,
    pub text: String,
    /// Replies for the first tool-loop steps of a research agent; `text` follows.
    #[serde(default)]
    pub steps: Vec<String>,
    /// Reply used for the reprompt after a parse failure; defaults to `text`.
    #[serde(default)]
    pub reprompt_text: Option<String>,
    /// Transient failures returned before the first success, per prompt.
    #[serde(default)]
    pub fail_times: u32,
    #[serde(default)]
    pub delay_ms: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    #[serde(default)]
    response: Vec<ResponseRule>,
    #[serde(default)]
    tool: Vec<ToolRule>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("bad fixture {0}: {1}")]
    Parse(String, String),
}

pub struct MockBackend {
    rules: Vec<ResponseRule>,
    tools: MockTools,
    dim: usize,
    failures: Mutex<HashMap<(usize, String), u32>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl MockBackend {
    pub fn new(rules: Vec<ResponseRule>, tools: Vec<ToolRule>, dim: usize) -> Self {
        Self {
            rules,
            tools: MockTools { rules: tools },
            dim: dim.max(8),
            failures: Mutex::new(HashMap::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self, FixtureError> {
        let f: FixtureFile = toml::from_str(text).map_err(|e| FixtureError::Parse("<inline>".into(), e.to_string()))?;
        Ok(Self::new(f.response, f.tool, dim))
    }

    pub fn load(paths: &[PathBuf], dim: usize) -> Result<Self, FixtureError> {
        let mut rules = Vec::new();
        let mut tools = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(p).map_err(|e| FixtureError::Read(p.clone(), e))?;
            let f: FixtureFile =
                toml::from_str(&text).map_err(|e| FixtureError::Parse(p.display().to_string(), e.to_string()))?;
            rules.extend(f.response);
            tools.extend(f.tool);
        }
        Ok(Self::new(rules, tools, dim))
    }

    pub fn tools(&self) -> MockTools {
        self.tools.clone()
    }

    /// Highest number of chat calls observed in progress at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn select(&self, call: &ChatCall<'_>) -> Option<(usize, &ResponseRule)> {
        let prompt = call
            .messages
            .iter()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        self.rules
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.template == call.template.as_str()
                    && r.backend.as_deref().is_none_or(|b| b == call.backend_id)
                    && r.prompt_sha.as_deref().is_none_or(|s| s == call.prompt_digest)
                    && r.matches.iter().all(|m| prompt.contains(m.as_str()))
            })
            // Reverse so that max_by_key keeps the earliest rule on ties.
            .rev()
            .max_by_key(|(_, r)| (r.prompt_sha.is_some(), r.matches.len(), r.backend.is_some()))
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn count_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl Backend for MockBackend {
    fn chat(&self, call: &ChatCall<'_>) -> Result<ChatReply, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        self.peak.fetch_max(now, Ordering::SeqCst);

        let (idx, rule) = self.select(call).ok_or_else(|| {
            TransportError::Fatal(format!(
                "no mock response for template {} (prompt digest {})",
                call.template, call.prompt_digest
            ))
        })?;
        if rule.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(rule.delay_ms));
        }
        if rule.fail_times > 0 {
            let mut f = self.failures.lock().expect("mock lock");
            let n = f.entry((idx, call.prompt_digest.to_string())).or_default();
            if *n < rule.fail_times {
                *n += 1;
                return Err(TransportError::Retryable(format!("scripted failure {n}")));
            }
        }
        let text = if call.reprompt {
            rule.reprompt_text.clone().unwrap_or_else(|| rule.text.clone())
        } else if call.research && call.step < rule.steps.len() {
            rule.steps[call.step].clone()
        } else {
            rule.text.clone()
        };
        Ok(ChatReply {
            prompt_tokens: call.messages.iter().map(|m| count_tokens(&m.content)).sum(),
            completion_tokens: count_tokens(&text),
            text,
        })
    }

    fn embed(&self, _: &str, _: &BackendConfig, texts: &[String]) -> Result<Vec<Vec<f32>>, TransportError> {
        Ok(texts.iter().map(|t| hashed_embedding(t, self.dim)).collect())
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "are", "was", "were", "will", "with", "that", "this", "from", "than", "into",
    "have", "has", "had", "not", "but", "its", "their", "there", "what", "which", "who", "whom",
    "been", "being", "any", "all", "per", "via", "such", "more", "most", "less", "least", "other",
];

/// Unit-length bag-of-words vector over hashed word buckets.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0f32; dim];
    for w in text.split(|c: char| !c.is_alphanumeric()) {
        let w = w.to_lowercase();
        if w.len() < 3 || STOPWORDS.contains(&w.as_str()) {
            continue;
        }
        let h = ffoundry_core::ids::sha256_hex(w.as_bytes());
        let bucket = usize::from_str_radix(&h[..8], 16).expect("hex digest") % dim;
        v[bucket] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Convenience for tests: a mock loaded from one fixture file.
pub fn load_one(path: &Path) -> Result<MockBackend, FixtureError> {
    MockBackend::load(&[path.to_path_buf()], DEFAULT_DIM)
}
