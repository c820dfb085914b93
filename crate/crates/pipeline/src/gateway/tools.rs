//! Tools available to research agents.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::live::{classify, Transport, UreqTransport};
use crate::config::ToolsConfig;

pub trait Tools: Send + Sync {
    fn web_search(&self, query: &str) -> Result<String, String>;
    /// Answers `question` from the page at `url`.
    fn read_url(&self, url: &str, question: &str) -> Result<String, String>;
}

pub struct NoTools;

impl Tools for NoTools {
    fn web_search(&self, _: &str) -> Result<String, String> {
        Err("no search tool configured".into())
    }
    fn read_url(&self, _: &str, _: &str) -> Result<String, String> {
        Err("no browsing tool configured".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRule {
    pub action: String,
    #[serde(default, rename = "match")]
    pub matches: Vec<String>,
    pub text: String,
}

/// Canned observations chosen by substring match on the tool input.
#[derive(Debug, Clone, Default)]
pub struct MockTools {
    pub rules: Vec<ToolRule>,
}

impl MockTools {
    fn lookup(&self, action: &str, input: &str) -> String {
        self.rules
            .iter()
            .filter(|r| r.action == action && r.matches.iter().all(|m| input.contains(m.as_str())))
            .max_by_key(|r| r.matches.len())
            .map(|r| r.text.clone())
            .unwrap_or_else(|| format!("No results for {input}."))
    }
}

impl Tools for MockTools {
    fn web_search(&self, query: &str) -> Result<String, String> {
        Ok(self.lookup("web_search", query))
    }
    fn read_url(&self, url: &str, question: &str) -> Result<String, String> {
        Ok(self.lookup("read_url", &format!("{url} {question}")))
    }
}

/// Search through a JSON search endpoint; pages are fetched and the
/// paragraphs most relevant to the question are returned.
pub struct LiveTools {
    config: ToolsConfig,
    transport: Arc<dyn Transport>,
}

impl LiveTools {
    pub fn from_config(config: &ToolsConfig) -> Self {
        Self::new(config.clone(), Arc::new(UreqTransport))
    }

    pub fn new(config: ToolsConfig, transport: Arc<dyn Transport>) -> Self {
        Self { config, transport }
    }
}

const TIMEOUT: Duration = Duration::from_secs(60);

impl Tools for LiveTools {
    fn web_search(&self, query: &str) -> Result<String, String> {
        let endpoint = self
            .config
            .search_endpoint
            .as_deref()
            .ok_or("no search endpoint configured")?;
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(var) = &self.config.search_auth_env {
            let key = std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?;
            headers.push(("X-API-KEY".into(), key));
        }
        let resp = self
            .transport
            .post_json(endpoint, &headers, &json!({"q": query}), TIMEOUT)
            .map_err(|e| e.to_string())?;
        let body = classify(resp).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&body).map_err(|e| e.to_string())?;
        let results = v["organic"].as_array().cloned().unwrap_or_default();
        if results.is_empty() {
            return Ok(format!("No results for {query}."));
        }
        Ok(results
            .iter()
            .take(10)
            .map(|r| {
                format!(
                    "{}\n{}\n{}",
                    r["title"].as_str().unwrap_or(""),
                    r["link"].as_str().unwrap_or(""),
                    r["snippet"].as_str().unwrap_or("")
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n"))
    }

    fn read_url(&self, url: &str, question: &str) -> Result<String, String> {
        let resp = self.transport.get(url, &[], TIMEOUT).map_err(|e| e.to_string())?;
        let html = classify(resp).map_err(|e| e.to_string())?;
        let text = crate::ingest::extract::main_text(&html);
        Ok(relevant_excerpt(&text, question, self.config.max_page_chars))
    }
}

/// Paragraphs ranked by word overlap with `question`, kept in page order,
/// up to `max_chars`.
pub fn relevant_excerpt(text: &str, question: &str, max_chars: usize) -> String {
    let words: std::collections::BTreeSet<String> = question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 3)
        .map(str::to_lowercase)
        .collect();
    let paras: Vec<&str> = text.split("\n\n").filter(|p| !p.trim().is_empty()).collect();
    let mut ranked: Vec<(usize, usize)> = paras
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let lower = p.to_lowercase();
            (words.iter().filter(|w| lower.contains(w.as_str())).count(), i)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut keep = Vec::new();
    let mut used = 0;
    for (_, i) in ranked {
        let len = paras[i].chars().count();
        if used + len > max_chars && !keep.is_empty() {
            continue;
        }
        used += len;
        keep.push(i);
        if used >= max_chars {
            break;
        }
    }
    keep.sort_unstable();
    let out = keep.iter().map(|&i| paras[i]).collect::<Vec<_>>().join("\n\n");
    out.chars().take(max_chars).collect()
}
