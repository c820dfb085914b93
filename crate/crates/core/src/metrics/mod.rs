//! Scoring mathematics: Brier score and its binned decomposition, bootstrap
//! intervals and ranking stability, Beta-posterior intervals, forecast
//! distribution summaries and resolver statistics.

mod beta;
mod bootstrap;
mod brier;
mod distribution;
mod resolution_stats;

pub use beta::{beta_interval, beta_quantile, CredibleInterval};
pub use bootstrap::{
    bootstrap_ci, bootstrap_mean_ci, percentile, ranking_stability, BootstrapInterval,
    ModelForecasts, RankingStability,
};
pub use brier::{
    bin_index, brier, brier_terms, decompose, BrierDecomposition, ReliabilityBin,
    ReliabilityBins,
};
pub use distribution::{distribution_summary, DistributionSummary, HistogramBin};
pub use resolution_stats::{resolution_stats, ResolutionStats};

use std::collections::{BTreeMap, BTreeSet};

use crate::resolution::FinalResolution;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("misaligned inputs: {0}")]
    MisalignedInputs(String),
    #[error("no forecasts to score")]
    Empty,
    #[error("forecast {0} outside [0, 1]")]
    OutOfRange(String),
    #[error("bin count must be at least 2, got {0}")]
    BadBinCount(usize),
    #[error("models share no scoreable questions")]
    EmptyIntersection,
    #[error("domain error: {0}")]
    Domain(String),
}

/// Binary outcomes keyed by question id. Annulled questions never enter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutcomeSet {
    outcomes: BTreeMap<String, bool>,
}

impl OutcomeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_resolutions<'a>(resolutions: impl IntoIterator<Item = &'a FinalResolution>) -> Self {
        let outcomes = resolutions
            .into_iter()
            .filter_map(|r| r.verdict.outcome().map(|o| (r.question_id.clone(), o)))
            .collect();
        Self { outcomes }
    }

    pub fn insert(&mut self, id: impl Into<String>, outcome: bool) {
        self.outcomes.insert(id.into(), outcome);
    }

    pub fn get(&self, id: &str) -> Option<bool> {
        self.outcomes.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.outcomes.keys().map(String::as_str)
    }

    /// Aligns forecasts to outcomes in canonical id order. Forecasts for
    /// unresolved or annulled questions are dropped; duplicates are an error.
    pub fn align(&self, forecasts: &[(String, f64)]) -> Result<(Vec<String>, Vec<f64>, Vec<bool>), MetricsError> {
        let mut seen = BTreeSet::new();
        let mut rows: Vec<(&str, f64, bool)> = Vec::new();
        for (id, p) in forecasts {
            if !seen.insert(id.as_str()) {
                return Err(MetricsError::MisalignedInputs(format!("duplicate forecast for {id}")));
            }
            if let Some(o) = self.get(id) {
                rows.push((id, *p, o));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let ids = rows.iter().map(|r| r.0.to_string()).collect();
        let ps = rows.iter().map(|r| r.1).collect();
        let os = rows.iter().map(|r| r.2).collect();
        Ok((ids, ps, os))
    }
}
