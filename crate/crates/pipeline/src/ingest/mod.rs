//! Seed ingestion from news APIs and local text.

pub mod extract;
pub mod gdelt;
pub mod mediacloud;
pub mod recorded;
pub mod sampler;
pub mod text;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use ffoundry_core::{Seed, SeedSource};
use rayon::prelude::*;
use serde_json::Value;
use thiserror::Error;

use crate::config::{SeedConfig, SeedSourceKind};
use crate::gateway::live::{classify, Transport, UreqTransport};
use crate::gateway::Limiter;
use sampler::Candidate;

pub use text::load_text_seeds;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("upstream unavailable: {0}")]
    UpstreamUnavailable(String),
    #[error("no article could be fetched: {0}")]
    EmptyHarvest(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub const TRUNCATION_MARKER: &str = "[... article truncated]";

/// Cuts `text` to at most `max_chars` characters, preferring the last
/// paragraph break, and appends a marker.
pub fn truncate(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let budget = max_chars.saturating_sub(TRUNCATION_MARKER.chars().count() + 2);
    let cut = text.char_indices().nth(budget).map_or(text.len(), |(i, _)| i);
    let head = &text[..cut];
    let head = match head.rfind("\n\n") {
        Some(i) if i > 0 => &head[..i],
        _ => head,
    };
    format!("{}\n\n{TRUNCATION_MARKER}", head.trim_end())
}

/// Fetches candidates in order until `max` seeds are collected. Requests run
/// in parallel with at most `host_cap` in flight per host.
pub fn fetch_articles(
    transport: &dyn Transport,
    candidates: &[Candidate],
    source: SeedSource,
    max: usize,
    max_chars: usize,
    host_cap: usize,
    now: DateTime<Utc>,
) -> Vec<Seed> {
    let mut limiters: HashMap<String, Limiter> = HashMap::new();
    for c in candidates {
        limiters
            .entry(host(&c.url))
            .or_insert_with(|| Limiter::new(host_cap.max(1), u32::MAX));
    }
    let mut seeds: Vec<Seed> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut next = 0;
    while seeds.len() < max && next < candidates.len() {
        let need = max - seeds.len();
        let window = &candidates[next..(next + need).min(candidates.len())];
        next += window.len();
        let fetched: Vec<Option<Seed>> = window
            .par_iter()
            .map(|c| {
                let _permit = limiters[&host(&c.url)].acquire();
                let html = transport
                    .get(&c.url, &[], std::time::Duration::from_secs(60))
                    .and_then(classify);
                match html {
                    Ok(html) => {
                        let body = extract::main_text(&html);
                        let mut s = Seed::new(source, truncate(&body, max_chars), Some(c.url.clone()), now)?;
                        s.extra.insert("title".into(), Value::String(c.title.clone()));
                        s.extra.insert("event_type".into(), Value::String(c.event_type.clone()));
                        s.extra.insert("geography".into(), Value::String(c.geography.clone()));
                        Some(s)
                    }
                    Err(e) => {
                        tracing::warn!("skipping {}: {e}", c.url);
                        None
                    }
                }
            })
            .collect();
        for s in fetched.into_iter().flatten() {
            if seen.insert(s.id.clone()) {
                seeds.push(s);
            }
        }
    }
    seeds
}

fn host(u: &str) -> String {
    url::Url::parse(u)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_default()
}

/// Everything needed to build seeds from the configured source.
pub struct SeedQuery<'a> {
    pub config: &'a SeedConfig,
    pub base_dir: &'a std::path::Path,
    pub now: DateTime<Utc>,
    pub seed: u64,
}

fn transport(q: &SeedQuery<'_>) -> Result<Arc<dyn Transport>, IngestError> {
    Ok(match &q.config.recorded {
        Some(p) => {
            let p = q.base_dir.join(p);
            Arc::new(recorded::RecordedTransport::load(&p).map_err(|e| IngestError::Io(e.to_string()))?)
        }
        None => Arc::new(UreqTransport),
    })
}

pub fn fetch_gdelt(q: &SeedQuery<'_>, transport: &dyn Transport) -> Result<Vec<Seed>, IngestError> {
    let c = q.config;
    if c.max_seeds == 0 {
        return Err(IngestError::Precondition("max seeds must be at least 1".into()));
    }
    let queries: BTreeMap<String, String> = if c.gdelt.event_queries.is_empty() {
        gdelt::default_event_queries()
    } else {
        c.gdelt.event_queries.clone()
    };
    let lookback = c.lookback_days.unwrap_or(14);
    let cands = gdelt::candidates(transport, &c.gdelt.endpoint, &queries, q.now, lookback, c.gdelt.max_records)?;
    let ordered = sampler::stratified_order(cands, q.seed);
    harvest(transport, &ordered, SeedSource::Gdelt, q)
}

pub fn fetch_mediacloud(q: &SeedQuery<'_>, transport: &dyn Transport) -> Result<Vec<Seed>, IngestError> {
    let c = q.config;
    if c.max_seeds == 0 {
        return Err(IngestError::Precondition("max seeds must be at least 1".into()));
    }
    let lookback = c.lookback_days.unwrap_or(5);
    let cands = mediacloud::candidates(transport, &c.mediacloud, q.now, lookback, c.max_seeds)?;
    harvest(transport, &cands, SeedSource::Mediacloud, q)
}

fn harvest(transport: &dyn Transport, cands: &[Candidate], source: SeedSource, q: &SeedQuery<'_>) -> Result<Vec<Seed>, IngestError> {
    let c = q.config;
    let seeds = fetch_articles(transport, cands, source, c.max_seeds, c.max_chars, c.host_concurrency, q.now);
    if seeds.is_empty() {
        return Err(IngestError::EmptyHarvest(format!("{} candidate URLs", cands.len())));
    }
    Ok(seeds)
}

/// Seeds from the configured source, sorted by id.
pub fn ingest(q: &SeedQuery<'_>) -> Result<Vec<Seed>, IngestError> {
    let mut seeds = match q.config.source {
        SeedSourceKind::Text => {
            let p = q
                .config
                .path
                .as_ref()
                .ok_or_else(|| IngestError::Precondition("seeds.path is required for text seeds".into()))?;
            let mut s = load_text_seeds(&q.base_dir.join(p), q.config.max_chars, q.now)?;
            s.truncate(q.config.max_seeds);
            s
        }
        SeedSourceKind::Gdelt => fetch_gdelt(q, transport(q)?.as_ref())?,
        SeedSourceKind::Mediacloud => fetch_mediacloud(q, transport(q)?.as_ref())?,
    };
    seeds.sort_by(|a, b| a.id.cmp(&b.id));
    seeds.dedup_by(|a, b| a.id == b.id);
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_respects_limit_and_paragraphs() {
        let text = format!("{}\n\n{}\n\n{}", "a".repeat(40), "b".repeat(40), "c".repeat(40));
        let t = truncate(&text, 100);
        assert!(t.chars().count() <= 100);
        assert!(t.ends_with(TRUNCATION_MARKER));
        assert!(t.starts_with(&"a".repeat(40)));
        assert!(!t.contains("ccc"));
        assert_eq!(truncate("short", 100), "short");
    }
}
