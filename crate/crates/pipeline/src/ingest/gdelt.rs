//! GDELT document-search client (ArtList mode).

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::Deserialize;
use url::Url;

use super::sampler::Candidate;
use super::IngestError;
use crate::gateway::live::{classify, Transport};

/// Event types queried when none are configured.
pub fn default_event_queries() -> BTreeMap<String, String> {
    [
        ("conflict", "(military OR ceasefire OR sanctions)"),
        ("economy", "(inflation OR \"interest rate\" OR tariffs)"),
        ("elections", "(election OR referendum OR parliament)"),
        ("health", "(outbreak OR vaccine OR \"public health\")"),
        ("technology", "(\"artificial intelligence\" OR semiconductor OR launch)"),
        ("climate", "(climate OR wildfire OR hurricane OR drought)"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn query_url(endpoint: &str, query: &str, start: DateTime<Utc>, end: DateTime<Utc>, max_records: usize) -> Result<String, IngestError> {
    let fmt = "%Y%m%d%H%M%S";
    Url::parse_with_params(
        endpoint,
        &[
            ("query", format!("{query} sourcelang:english")),
            ("mode", "ArtList".into()),
            ("format", "json".into()),
            ("sort", "DateDesc".into()),
            ("maxrecords", max_records.min(250).to_string()),
            ("startdatetime", start.format(fmt).to_string()),
            ("enddatetime", end.format(fmt).to_string()),
        ],
    )
    .map(String::from)
    .map_err(|e| IngestError::Precondition(format!("bad GDELT endpoint {endpoint}: {e}")))
}

#[derive(Debug, Deserialize)]
struct ArtList {
    #[serde(default)]
    articles: Vec<Article>,
}

#[derive(Debug, Deserialize)]
struct Article {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    sourcecountry: String,
}

/// Runs one query per event type and returns every listed article.
pub fn candidates(
    transport: &dyn Transport,
    endpoint: &str,
    event_queries: &BTreeMap<String, String>,
    now: DateTime<Utc>,
    lookback_days: u32,
    max_records: usize,
) -> Result<Vec<Candidate>, IngestError> {
    let start = now - Duration::days(i64::from(lookback_days));
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for (event_type, query) in event_queries {
        let url = query_url(endpoint, query, start, now, max_records)?;
        let body = transport
            .get(&url, &[], std::time::Duration::from_secs(60))
            .and_then(classify);
        match body {
            Ok(body) => {
                // GDELT answers with an empty body when nothing matches.
                let list: ArtList = if body.trim().is_empty() {
                    ArtList { articles: Vec::new() }
                } else {
                    serde_json::from_str(&body)
                        .map_err(|e| IngestError::UpstreamUnavailable(format!("GDELT returned unreadable JSON: {e}")))?
                };
                out.extend(list.articles.into_iter().map(|a| Candidate {
                    url: a.url,
                    title: a.title,
                    event_type: event_type.clone(),
                    geography: if a.sourcecountry.is_empty() { "unknown".into() } else { a.sourcecountry },
                }));
            }
            Err(e) => failures.push(format!("{event_type}: {e}")),
        }
    }
    if out.is_empty() && !failures.is_empty() {
        return Err(IngestError::UpstreamUnavailable(format!("GDELT queries failed: {}", failures.join("; "))));
    }
    Ok(out)
}
