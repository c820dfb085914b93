//! Question lifecycle entities.
//!
//! Every record keeps unknown JSON fields in `extra` so that files written by
//! newer tools survive a read/modify/write cycle.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ids;

pub type Extra = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Gdelt,
    Mediacloud,
    Text,
}

impl SeedSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedSource::Gdelt => "gdelt",
            SeedSource::Mediacloud => "mediacloud",
            SeedSource::Text => "text",
        }
    }
}

impl fmt::Display for SeedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: String,
    pub source: SeedSource,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub retrieved_at: DateTime<Utc>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Seed {
    /// Builds a seed with its content-derived id. Returns `None` for blank content.
    pub fn new(
        source: SeedSource,
        content: impl Into<String>,
        url: Option<String>,
        retrieved_at: DateTime<Utc>,
    ) -> Option<Self> {
        let content = content.into();
        if content.trim().is_empty() {
            return None;
        }
        Some(Self {
            id: ids::seed_id(source.as_str(), &content),
            source,
            content,
            url,
            retrieved_at,
            extra: Extra::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoQuestion {
    pub id: String,
    pub seed_id: String,
    pub title: String,
    pub rationale: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ProtoQuestion {
    pub fn new(seed_id: &str, title: impl Into<String>, rationale: impl Into<String>) -> Self {
        let title = title.into();
        Self {
            id: ids::proto_id(seed_id, &title),
            seed_id: seed_id.to_string(),
            title,
            rationale: rationale.into(),
            extra: Extra::new(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.title.trim_end().ends_with('?')
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub proto_id: String,
    pub title: String,
    pub background: String,
    pub resolution_criteria: String,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub created_at: DateTime<Utc>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Question {
    /// Text used for embeddings and duplicate checks: title plus description.
    pub fn embedding_text(&self) -> String {
        format!("{}\n\n{}", self.title, self.background)
    }
}

/// Run-level window within which every question must resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ResolutionWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DomainError> {
        if end <= start {
            return Err(DomainError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    /// First instant inside the window (00:00 UTC on `start`).
    pub fn opens_at(&self) -> DateTime<Utc> {
        Utc.from_utc_datetime(&self.start.and_hms_opt(0, 0, 0).expect("midnight"))
    }

    /// First instant after the window (00:00 UTC on the day after `end`).
    pub fn closes_at(&self) -> DateTime<Utc> {
        Utc.from_utc_datetime(&self.end.and_hms_opt(0, 0, 0).expect("midnight")) + Duration::days(1)
    }

    pub fn contains(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> bool {
        start >= self.opens_at() && end <= self.closes_at()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyTitle,
    EmptyBackground,
    EmptyResolutionCriteria,
    EmptyWindow,
    OutsideRunWindow,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::EmptyTitle => "empty title",
            Violation::EmptyBackground => "empty background",
            Violation::EmptyResolutionCriteria => "empty resolution criteria",
            Violation::EmptyWindow => "empty window",
            Violation::OutsideRunWindow => "outside run window",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn reasons(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Structural checks on a refined question against the run window.
pub fn validate_question(q: &Question, window: &ResolutionWindow) -> ValidationReport {
    let mut violations = Vec::new();
    if q.title.trim().is_empty() {
        violations.push(Violation::EmptyTitle);
    }
    if q.background.trim().is_empty() {
        violations.push(Violation::EmptyBackground);
    }
    if q.resolution_criteria.trim().is_empty() {
        violations.push(Violation::EmptyResolutionCriteria);
    }
    if q.window_end <= q.window_start {
        violations.push(Violation::EmptyWindow);
    }
    if !window.contains(q.window_start, q.window_end) {
        violations.push(Violation::OutsideRunWindow);
    }
    ValidationReport { violations }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleState {
    Seeded,
    Proto,
    Refined,
    Verified,
    Deduped,
    Researched,
    Forecasted,
    Resolved,
    Scored,
}

impl LifecycleState {
    pub const ORDER: [LifecycleState; 9] = [
        LifecycleState::Seeded,
        LifecycleState::Proto,
        LifecycleState::Refined,
        LifecycleState::Verified,
        LifecycleState::Deduped,
        LifecycleState::Researched,
        LifecycleState::Forecasted,
        LifecycleState::Resolved,
        LifecycleState::Scored,
    ];

    fn rank(self) -> usize {
        self as usize
    }

    /// Validates a single-step transition; `from == to` is an idempotent no-op.
    pub fn advance(from: Self, to: Self) -> Result<Self, DomainError> {
        if from == to || to.rank() == from.rank() + 1 {
            Ok(to)
        } else {
            Err(DomainError::IllegalTransition { from, to })
        }
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEntry {
    pub id: String,
    pub state: LifecycleState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

/// Per-entity lifecycle states. Advancement is checked against the current
/// state; rejected entities are terminal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LifecycleBook {
    entries: BTreeMap<String, LifecycleEntry>,
}

impl LifecycleBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LifecycleEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.id.clone(), e)).collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &LifecycleEntry> {
        self.entries.values()
    }

    pub fn get(&self, id: &str) -> Option<&LifecycleEntry> {
        self.entries.get(id)
    }

    /// Registers an entity at `state` unless it is already known.
    pub fn register(&mut self, id: &str, state: LifecycleState) {
        self.entries.entry(id.to_string()).or_insert_with(|| LifecycleEntry {
            id: id.to_string(),
            state,
            rejected: None,
        });
    }

    pub fn advance(
        &mut self,
        id: &str,
        from: LifecycleState,
        to: LifecycleState,
    ) -> Result<LifecycleState, DomainError> {
        let entry = self
            .entries
            .get_mut(id)
            .ok_or_else(|| DomainError::UnknownEntity(id.to_string()))?;
        if let Some(reason) = &entry.rejected {
            return Err(DomainError::Terminal {
                id: id.to_string(),
                reason: reason.clone(),
            });
        }
        if entry.state == to {
            return Ok(to);
        }
        if entry.state != from {
            return Err(DomainError::IllegalTransition {
                from: entry.state,
                to,
            });
        }
        entry.state = LifecycleState::advance(from, to)?;
        Ok(entry.state)
    }

    pub fn reject(&mut self, id: &str, reason: impl Into<String>) -> Result<(), DomainError> {
        let entry = self
            .entries
            .get_mut(id)
            .ok_or_else(|| DomainError::UnknownEntity(id.to_string()))?;
        entry.rejected = Some(reason.into());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("illegal lifecycle transition {from} -> {to}")]
    IllegalTransition {
        from: LifecycleState,
        to: LifecycleState,
    },
    #[error("{id} was rejected and is terminal: {reason}")]
    Terminal { id: String, reason: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("resolution window must end after it starts ({start} .. {end})")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    fn run_window() -> ResolutionWindow {
        ResolutionWindow::new(date(2025, 10, 15), date(2025, 12, 31)).unwrap()
    }

    fn question(start: DateTime<Utc>, end: DateTime<Utc>) -> Question {
        Question {
            id: "q_1".into(),
            proto_id: "p_1".into(),
            title: "Will X happen?".into(),
            background: "Status quo.".into(),
            resolution_criteria: "Resolves YES if X.".into(),
            window_start: start,
            window_end: end,
            created_at: at(2025, 10, 1),
            extra: Extra::new(),
        }
    }

    #[test]
    fn well_formed_question_inside_window_is_valid() {
        let q = question(at(2025, 10, 20), at(2025, 12, 1));
        assert!(validate_question(&q, &run_window()).is_valid());
    }

    #[test]
    fn zero_length_window_is_empty() {
        let q = question(at(2025, 11, 1), at(2025, 11, 1));
        let report = validate_question(&q, &run_window());
        assert_eq!(report.reasons(), vec!["empty window"]);
    }

    #[test]
    fn end_past_run_window_is_flagged() {
        let q = question(at(2025, 10, 20), at(2026, 1, 5));
        let report = validate_question(&q, &run_window());
        assert_eq!(report.reasons(), vec!["outside run window"]);
    }

    #[test]
    fn last_minute_of_run_window_is_inside() {
        let end = Utc.with_ymd_and_hms(2025, 12, 31, 23, 59, 0).unwrap();
        let q = question(at(2025, 10, 15), end);
        assert!(validate_question(&q, &run_window()).is_valid());
    }

    #[test]
    fn blank_text_fields_are_violations() {
        let mut q = question(at(2025, 10, 20), at(2025, 12, 1));
        q.background = "  ".into();
        q.resolution_criteria.clear();
        let report = validate_question(&q, &run_window());
        assert_eq!(
            report.violations,
            vec![Violation::EmptyBackground, Violation::EmptyResolutionCriteria]
        );
    }

    #[test]
    fn run_window_must_be_nonempty() {
        assert!(ResolutionWindow::new(date(2025, 12, 31), date(2025, 12, 31)).is_err());
    }

    #[test]
    fn lifecycle_transitions() {
        use LifecycleState::*;
        assert_eq!(LifecycleState::advance(Refined, Verified), Ok(Verified));
        assert_eq!(
            LifecycleState::advance(Refined, Resolved),
            Err(DomainError::IllegalTransition {
                from: Refined,
                to: Resolved
            })
        );
        assert_eq!(LifecycleState::advance(Verified, Verified), Ok(Verified));
        assert!(LifecycleState::advance(Verified, Refined).is_err());
    }

    #[test]
    fn book_is_idempotent_and_terminal_on_reject() {
        use LifecycleState::*;
        let mut book = LifecycleBook::new();
        book.register("q_a", Refined);
        assert_eq!(book.advance("q_a", Refined, Verified), Ok(Verified));
        assert_eq!(book.advance("q_a", Refined, Verified), Ok(Verified));
        assert!(book.advance("q_a", Deduped, Researched).is_err());
        book.reject("q_a", "duplicate of q_0").unwrap();
        assert!(matches!(
            book.advance("q_a", Verified, Deduped),
            Err(DomainError::Terminal { .. })
        ));
    }

    #[test]
    fn blank_seed_is_refused() {
        assert!(Seed::new(SeedSource::Text, " \n", None, at(2025, 9, 27)).is_none());
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let line = r#"{"id":"p_1","seed_id":"s_1","title":"Will it?","rationale":"r","score":3}"#;
        let proto: ProtoQuestion = serde_json::from_str(line).unwrap();
        assert_eq!(proto.extra.get("score"), Some(&Value::from(3)));
        let back: Value = serde_json::to_value(&proto).unwrap();
        assert_eq!(back, serde_json::from_str::<Value>(line).unwrap());
    }

    #[test]
    fn timestamps_compare_chronologically_across_offsets() {
        let json = r#"{"id":"s","source":"text","content":"c","retrieved_at":"2025-10-01T02:00:00+02:00"}"#;
        let seed: Seed = serde_json::from_str(json).unwrap();
        assert_eq!(seed.retrieved_at, at(2025, 10, 1));
        let encoded = serde_json::to_string(&seed).unwrap();
        assert!(encoded.contains("2025-10-01T00:00:00Z"));
    }
}
