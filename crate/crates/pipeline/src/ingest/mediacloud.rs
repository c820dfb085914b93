//! Media Cloud story-list client.

use chrono::{DateTime, Duration, Utc};
use serde::Deserialize;
use url::Url;

use super::sampler::Candidate;
use super::IngestError;
use crate::config::MediacloudConfig;
use crate::gateway::live::{classify, Transport};

pub fn query_url(cfg: &MediacloudConfig, now: DateTime<Utc>, lookback_days: u32, token: Option<&str>) -> Result<String, IngestError> {
    let start = (now - Duration::days(i64::from(lookback_days))).date_naive();
    let mut params = vec![
        ("q", cfg.query.clone()),
        ("start", start.to_string()),
        ("end", now.date_naive().to_string()),
    ];
    if !cfg.collections.is_empty() {
        let cs: Vec<String> = cfg.collections.iter().map(u64::to_string).collect();
        params.push(("cs", cs.join(",")));
    }
    if let Some(t) = token {
        params.push(("pagination_token", t.to_string()));
    }
    Url::parse_with_params(&cfg.endpoint, &params)
        .map(String::from)
        .map_err(|e| IngestError::Precondition(format!("bad Media Cloud endpoint {}: {e}", cfg.endpoint)))
}

#[derive(Debug, Deserialize)]
struct StoryList {
    #[serde(default)]
    stories: Vec<Story>,
    #[serde(default)]
    pagination_token: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Story {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    media_name: String,
}

/// Lists stories page by page until `want` are collected or pages run out.
pub fn candidates(
    transport: &dyn Transport,
    cfg: &MediacloudConfig,
    now: DateTime<Utc>,
    lookback_days: u32,
    want: usize,
) -> Result<Vec<Candidate>, IngestError> {
    let key = std::env::var(&cfg.auth_env).map_err(|_| {
        IngestError::UpstreamUnavailable(format!(
            "Media Cloud API key missing: set the {} environment variable (or seeds.mediacloud.auth_env)",
            cfg.auth_env
        ))
    })?;
    let headers = vec![
        ("Authorization".to_string(), format!("Token {key}")),
        ("Accept".to_string(), "application/json".to_string()),
    ];
    let mut out = Vec::new();
    let mut token: Option<String> = None;
    loop {
        let url = query_url(cfg, now, lookback_days, token.as_deref())?;
        let body = transport
            .get(&url, &headers, std::time::Duration::from_secs(60))
            .and_then(classify)
            .map_err(|e| IngestError::UpstreamUnavailable(format!("Media Cloud: {e}")))?;
        let page: StoryList = serde_json::from_str(&body)
            .map_err(|e| IngestError::UpstreamUnavailable(format!("Media Cloud returned unreadable JSON: {e}")))?;
        let n = page.stories.len();
        out.extend(page.stories.into_iter().map(|s| Candidate {
            url: s.url,
            title: s.title,
            event_type: "news".into(),
            geography: if s.media_name.is_empty() { "unknown".into() } else { s.media_name },
        }));
        match page.pagination_token {
            Some(t) if n > 0 && out.len() < want.saturating_mul(4) && Some(&t) != token.as_ref() => token = Some(t),
            _ => return Ok(out),
        }
    }
}
