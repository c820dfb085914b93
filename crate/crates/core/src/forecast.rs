//! Research dossiers, forecast records and subquestion bundles.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::Extra;

/// Maximum number of subquestions kept from one decomposition.
pub const MAX_SUBQUESTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchDossier {
    pub question_id: String,
    pub researcher_backend: String,
    pub dossier_text: String,
    pub researched_at: DateTime<Utc>,
    pub fake_now: DateTime<Utc>,
    pub transcript_ref: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ResearchDossier {
    /// Stable reference used by forecast records.
    pub fn reference(&self) -> String {
        format!("{}@{}", self.question_id, self.researcher_backend)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    Subquestions,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Subquestions => "subquestions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub question_id: String,
    pub forecaster_backend: String,
    pub dossier_ref: String,
    /// `None` when the forecaster's answer could not be parsed.
    pub probability: Option<f64>,
    pub strategy: Strategy,
    pub made_at: DateTime<Utc>,
    pub fake_now: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_ref: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ForecastRecord {
    pub fn researcher(&self) -> &str {
        self.dossier_ref
            .split_once('@')
            .map(|(_, r)| r)
            .unwrap_or("")
    }

    /// Identifies the forecasting setup: forecaster, researcher and strategy.
    pub fn model_key(&self) -> String {
        format!(
            "{}/{}/{}",
            self.forecaster_backend,
            self.researcher(),
            self.strategy.as_str()
        )
    }

    pub fn is_valid(&self) -> bool {
        self.probability
            .is_none_or(|p| p.is_finite() && (0.0..=1.0).contains(&p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subquestion {
    pub id: String,
    pub title: String,
    pub background: String,
    pub resolution_criteria: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubquestionBundle {
    pub parent_id: String,
    pub subquestions: Vec<Subquestion>,
    pub subdossiers: Vec<ResearchDossier>,
    pub subforecasts: Vec<ForecastRecord>,
    pub composed_dossier: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SubquestionBundle {
    /// Every subquestion has a researched dossier and a parsed forecast.
    pub fn is_complete(&self) -> bool {
        self.subquestions.len() == self.subforecasts.len()
            && self.subquestions.len() == self.subdossiers.len()
            && self
                .subquestions
                .iter()
                .zip(&self.subforecasts)
                .all(|(q, f)| q.id == f.question_id && f.probability.is_some())
    }
}
