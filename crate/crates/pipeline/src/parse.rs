//! Reading structured answers out of free-form agent replies.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("value {0} is outside 0..100")]
    OutOfRange(String),
    #[error("not a number: {0:?}")]
    NotNumeric(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("reply cannot be split into items: {0}")]
    MalformedList(String),
    #[error("not a date: {0:?}")]
    NotADate(String),
}

/// Strips markdown emphasis and list markers from the start of a line.
fn label_body(line: &str) -> &str {
    line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>'))
}

/// If `line` opens the field `name`, returns the remainder after the colon.
fn match_label<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let body = label_body(line);
    if body.len() < name.len() || !body[..name.len()].eq_ignore_ascii_case(name) {
        return None;
    }
    let rest = body[name.len()..].trim_start_matches(['*', '_', ' ']);
    rest.strip_prefix(':').map(|r| r.trim_start_matches(['*', ' ']))
}

fn clean_value(v: &str) -> String {
    v.trim()
        .trim_matches(|c: char| c == '*' || c == '`')
        .trim()
        .to_string()
}

/// Extracts `name:` fields. The last occurrence of a label wins and its value
/// runs until the next line that opens any declared label. Returns the found
/// fields and the names that were missing.
pub fn extract_fields(text: &str, names: &[&str]) -> (BTreeMap<String, String>, Vec<String>) {
    let lines: Vec<&str> = text.lines().collect();
    let opener = |line: &str| -> Option<(usize, String)> {
        // Longest name first so that `resolution` does not shadow
        // `resolution_derivation`.
        let mut best: Option<(usize, String)> = None;
        for (i, n) in names.iter().enumerate() {
            if let Some(rest) = match_label(line, n) {
                if best.as_ref().is_none_or(|(j, _)| names[*j].len() < n.len()) {
                    best = Some((i, rest.to_string()));
                }
            }
        }
        best
    };
    let mut found: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(usize, Vec<String>)> = None;
    let flush = |cur: Option<(usize, Vec<String>)>, found: &mut BTreeMap<String, String>| {
        if let Some((i, parts)) = cur {
            let value = clean_value(&parts.join("\n"));
            if !value.is_empty() {
                found.insert(names[i].to_string(), value);
            }
        }
    };
    for line in lines {
        if let Some((i, rest)) = opener(line) {
            flush(current.take(), &mut found);
            current = Some((i, vec![rest]));
        } else if let Some((_, parts)) = current.as_mut() {
            parts.push(line.to_string());
        }
    }
    flush(current, &mut found);
    let missing = names
        .iter()
        .filter(|n| !found.contains_key(**n))
        .map(|n| n.to_string())
        .collect();
    (found, missing)
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

/// Last number appearing in `text`, as written.
pub fn last_number(text: &str) -> Option<String> {
    number_re().find_iter(text).last().map(|m| m.as_str().to_string())
}

/// Parses a percentage such as `"73"` or `"2.5 %"` into a probability.
pub fn parse_probability(raw: &str) -> Result<f64, ParseError> {
    let cleaned: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let cleaned = cleaned.strip_suffix('%').unwrap_or(&cleaned);
    let value: f64 = cleaned
        .parse()
        .map_err(|_| ParseError::NotNumeric(raw.to_string()))?;
    if !value.is_finite() {
        return Err(ParseError::NotNumeric(raw.to_string()));
    }
    if !(0.0..=100.0).contains(&value) {
        return Err(ParseError::OutOfRange(raw.to_string()));
    }
    Ok(value / 100.0)
}

fn normalize_label(raw: &str) -> String {
    raw.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation() || c == '“' || c == '”')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Case-insensitive exact match against `allowed` after trimming whitespace
/// and punctuation. Never guesses the nearest label.
pub fn parse_categorical<'a>(raw: &str, allowed: &[&'a str]) -> Result<&'a str, ParseError> {
    assert!(!allowed.is_empty(), "allowed labels must be non-empty");
    let norm = normalize_label(raw);
    allowed
        .iter()
        .find(|a| normalize_label(a) == norm)
        .copied()
        .ok_or_else(|| ParseError::UnknownLabel(raw.trim().to_string()))
}

/// Splits a reply into items, each opened by `labels[0]` and carrying every
/// label. An empty list is returned when the reply says there is nothing to
/// list.
pub fn parse_items(text: &str, labels: &[&str]) -> Result<Vec<BTreeMap<String, String>>, ParseError> {
    let first = labels[0];
    let mut chunks: Vec<Vec<&str>> = Vec::new();
    for line in text.lines() {
        if match_label(line, first).is_some() {
            chunks.push(vec![line]);
        } else if let Some(c) = chunks.last_mut() {
            c.push(line);
        }
    }
    if chunks.is_empty() {
        let lower = text.to_lowercase();
        if lower.contains("no suitable questions") || lower.trim().is_empty() {
            return Ok(Vec::new());
        }
        return Err(ParseError::MalformedList(format!(
            "no line opens with {}:",
            first.to_uppercase()
        )));
    }
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, lines)| {
            let (fields, missing) = extract_fields(&lines.join("\n"), labels);
            if missing.is_empty() {
                Ok(fields)
            } else {
                Err(ParseError::MalformedList(format!(
                    "item {} lacks {}",
                    i + 1,
                    missing.join(", ")
                )))
            }
        })
        .collect()
}

fn date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d{4}-\d{2}-\d{2}").expect("valid regex"))
}

/// Accepts an RFC 3339 timestamp or any text containing a `YYYY-MM-DD` date
/// (read as midnight UTC).
pub fn parse_instant(raw: &str) -> Result<DateTime<Utc>, ParseError> {
    let t = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.with_timezone(&Utc));
    }
    parse_date(t).map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

pub fn parse_date(raw: &str) -> Result<NaiveDate, ParseError> {
    let m = date_re()
        .find(raw)
        .ok_or_else(|| ParseError::NotADate(raw.to_string()))?;
    NaiveDate::parse_from_str(m.as_str(), "%Y-%m-%d").map_err(|_| ParseError::NotADate(raw.to_string()))
}

/// Window end: a bare date means the end of that day.
pub fn parse_window_end(raw: &str) -> Result<DateTime<Utc>, ParseError> {
    let t = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.with_timezone(&Utc));
    }
    parse_date(t).map(|d| d.and_hms_opt(23, 59, 59).expect("valid time").and_utc())
}

/// Reads a resolution field: True/Yes, False/No, or Annul(led).
pub fn parse_resolution(raw: &str) -> Result<ffoundry_core::VoteVerdict, ParseError> {
    use ffoundry_core::VoteVerdict::*;
    match normalize_label(raw).as_str() {
        "true" | "yes" => Ok(Yes),
        "false" | "no" => Ok(No),
        "annul" | "annulled" | "annulment" | "void" => Ok(Annul),
        _ => Err(ParseError::UnknownLabel(raw.trim().to_string())),
    }
}

/// Similarity score 1..4; anything else is unscored.
pub fn parse_similarity(raw: &str) -> Option<u8> {
    let digits: Vec<char> = raw.chars().filter(|c| c.is_ascii_digit()).collect();
    match digits.as_slice() {
        [d] => d.to_digit(10).filter(|d| (1..=4).contains(d)).map(|d| d as u8),
        _ => None,
    }
}
