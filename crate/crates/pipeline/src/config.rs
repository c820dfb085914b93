//! Run configuration: one TOML file with `${VAR}` interpolation, plus
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use ffoundry_core::{Adjudication, ResolutionWindow};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("environment variable {0} referenced by the config is not set")]
    MissingEnv(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    /// OpenAI-compatible chat-completions endpoint.
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Model identifier sent to the endpoint; defaults to the backend id.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub reasoning: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Requests per minute. Unset means 60, or unlimited for mocks.
    #[serde(default)]
    pub rpm: Option<u32>,
    /// Unset means 4, or 64 for mocks.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    /// Base of the retry backoff; attempt `i` waits `backoff_ms * 4^i`.
    /// Unset means 1000, or 0 for mocks.
    #[serde(default)]
    pub backoff_ms: Option<u64>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    600
}

impl BackendConfig {
    fn is_mock(&self) -> bool {
        self.kind == BackendKind::Mock
    }

    pub fn rpm(&self) -> u32 {
        self.rpm.unwrap_or(if self.is_mock() { 1_000_000 } else { 60 })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.unwrap_or(if self.is_mock() { 64 } else { 4 })
    }

    pub fn backoff_ms(&self) -> u64 {
        self.backoff_ms.unwrap_or(if self.is_mock() { 0 } else { 1000 })
    }

    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            model: None,
            endpoint: None,
            auth_env: None,
            reasoning: None,
            temperature: None,
            max_retries: default_retries(),
            rpm: None,
            max_in_flight: None,
            backoff_ms: None,
            timeout_s: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Refiner,
    BackgroundResearcher,
    VerifierQuality,
    VerifierAmbiguity,
    VerifierResolvability,
    VerifierForecast,
    Deduplicator,
    Embedder,
    Researcher,
    Forecaster,
    Decomposer,
    SubquestionResearcher,
    SubquestionForecaster,
    ResolverA,
    ResolverB,
    ResolverC,
    Tiebreaker,
    Labeler,
    SimilarityScorer,
}

impl Role {
    pub const ALL: [Role; 20] = [
        Role::Generator,
        Role::Refiner,
        Role::BackgroundResearcher,
        Role::VerifierQuality,
        Role::VerifierAmbiguity,
        Role::VerifierResolvability,
        Role::VerifierForecast,
        Role::Deduplicator,
        Role::Embedder,
        Role::Researcher,
        Role::Forecaster,
        Role::Decomposer,
        Role::SubquestionResearcher,
        Role::SubquestionForecaster,
        Role::ResolverA,
        Role::ResolverB,
        Role::ResolverC,
        Role::Tiebreaker,
        Role::Labeler,
        Role::SimilarityScorer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Refiner => "refiner",
            Role::BackgroundResearcher => "background_researcher",
            Role::VerifierQuality => "verifier_quality",
            Role::VerifierAmbiguity => "verifier_ambiguity",
            Role::VerifierResolvability => "verifier_resolvability",
            Role::VerifierForecast => "verifier_forecast",
            Role::Deduplicator => "deduplicator",
            Role::Embedder => "embedder",
            Role::Researcher => "researcher",
            Role::Forecaster => "forecaster",
            Role::Decomposer => "decomposer",
            Role::SubquestionResearcher => "subquestion_researcher",
            Role::SubquestionForecaster => "subquestion_forecaster",
            Role::ResolverA => "resolver_a",
            Role::ResolverB => "resolver_b",
            Role::ResolverC => "resolver_c",
            Role::Tiebreaker => "tiebreaker",
            Role::Labeler => "labeler",
            Role::SimilarityScorer => "similarity_scorer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// Root seed for every random draw in the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Fixed wall clock. Makes timestamps, and therefore outputs, reproducible.
    #[serde(default)]
    pub clock: Option<DateTime<Utc>>,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSourceKind {
    Text,
    Gdelt,
    Mediacloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdeltConfig {
    #[serde(default = "default_gdelt_endpoint")]
    pub endpoint: String,
    /// One document-search query per event type; keys are the stratum names.
    #[serde(default)]
    pub event_queries: BTreeMap<String, String>,
    #[serde(default = "default_gdelt_records")]
    pub max_records: usize,
}

fn default_gdelt_endpoint() -> String {
    "https://api.gdeltproject.org/api/v2/doc/doc".into()
}
fn default_gdelt_records() -> usize {
    250
}

impl Default for GdeltConfig {
    fn default() -> Self {
        Self {
            endpoint: default_gdelt_endpoint(),
            event_queries: BTreeMap::new(),
            max_records: default_gdelt_records(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediacloudConfig {
    #[serde(default = "default_mc_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_mc_auth")]
    pub auth_env: String,
    #[serde(default = "default_mc_query")]
    pub query: String,
    #[serde(default)]
    pub collections: Vec<u64>,
}

fn default_mc_endpoint() -> String {
    "https://search.mediacloud.org/api/search/story-list".into()
}
fn default_mc_auth() -> String {
    "MEDIACLOUD_API_KEY".into()
}
fn default_mc_query() -> String {
    "*".into()
}

impl Default for MediacloudConfig {
    fn default() -> Self {
        Self {
            endpoint: default_mc_endpoint(),
            auth_env: default_mc_auth(),
            query: default_mc_query(),
            collections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default = "default_seed_source")]
    pub source: SeedSourceKind,
    /// Directory of text files or a JSONL file, for `source = "text"`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_max_seeds")]
    pub max_seeds: usize,
    /// Days of news to search; defaults to 14 for GDELT and 5 for Media Cloud.
    #[serde(default)]
    pub lookback_days: Option<u32>,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
    #[serde(default = "default_host_concurrency")]
    pub host_concurrency: usize,
    /// Recorded HTTP responses used instead of the network.
    #[serde(default)]
    pub recorded: Option<PathBuf>,
    #[serde(default)]
    pub gdelt: GdeltConfig,
    #[serde(default)]
    pub mediacloud: MediacloudConfig,
}

fn default_seed_source() -> SeedSourceKind {
    SeedSourceKind::Text
}
fn default_max_seeds() -> usize {
    2500
}
fn default_max_chars() -> usize {
    60_000
}
fn default_host_concurrency() -> usize {
    4
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            source: default_seed_source(),
            path: None,
            max_seeds: default_max_seeds(),
            lookback_days: None,
            max_chars: default_max_chars(),
            host_concurrency: default_host_concurrency(),
            recorded: None,
            gdelt: GdeltConfig::default(),
            mediacloud: MediacloudConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_max_protos")]
    pub max_protos: usize,
    #[serde(default = "default_budget")]
    pub agent_budget: usize,
    /// Attach a background-research dossier to each refined question.
    #[serde(default = "default_true")]
    pub background_research: bool,
}

fn default_max_protos() -> usize {
    7
}
fn default_budget() -> usize {
    40
}
fn default_true() -> bool {
    true
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            max_protos: default_max_protos(),
            agent_budget: default_budget(),
            background_research: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupConfig {
    #[serde(default = "default_threshold")]
    pub similarity_threshold: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_max_pairs")]
    pub max_pairs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_threshold() -> f64 {
    0.85
}
fn default_min_points() -> usize {
    2
}
fn default_max_pairs() -> usize {
    200
}
fn default_batch() -> usize {
    32
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: default_threshold(),
            min_points: default_min_points(),
            max_pairs: default_max_pairs(),
            batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    #[serde(default = "default_budget")]
    pub research_budget: usize,
    /// Simulated "today" given to researchers and forecasters.
    #[serde(default)]
    pub fake_now: Option<DateTime<Utc>>,
    /// Number of questions that get the subquestion strategy.
    #[serde(default = "default_subq_sample")]
    pub subq_sample: usize,
}

fn default_subq_sample() -> usize {
    500
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            research_budget: default_budget(),
            fake_now: None,
            subq_sample: default_subq_sample(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveConfig {
    #[serde(default)]
    pub adjudication: Adjudication,
    #[serde(default = "default_budget")]
    pub agent_budget: usize,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            adjudication: Adjudication::default(),
            agent_budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_hist_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Human-verified resolutions (JSONL of question_id + verdict).
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
}

fn default_bins() -> usize {
    10
}
fn default_hist_bins() -> usize {
    20
}
fn default_iterations() -> usize {
    10_000
}
fn default_mass() -> f64 {
    0.95
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            histogram_bins: default_hist_bins(),
            iterations: default_iterations(),
            mass: default_mass(),
            ground_truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_pairs")]
    pub pairs_per_cluster: usize,
    #[serde(default = "default_label_sample")]
    pub label_sample: usize,
    #[serde(default = "default_kmeans_iters")]
    pub max_iterations: usize,
}

fn default_k() -> usize {
    12
}
fn default_pairs() -> usize {
    15
}
fn default_label_sample() -> usize {
    20
}
fn default_kmeans_iters() -> usize {
    100
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            pairs_per_cluster: default_pairs(),
            label_sample: default_label_sample(),
            max_iterations: default_kmeans_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsConfig {
    /// Search endpoint taking `{"q": ...}` and returning organic results.
    #[serde(default)]
    pub search_endpoint: Option<String>,
    #[serde(default)]
    pub search_auth_env: Option<String>,
    #[serde(default = "default_page_chars")]
    pub max_page_chars: usize,
}

fn default_page_chars() -> usize {
    20_000
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            search_endpoint: None,
            search_auth_env: None,
            max_page_chars: default_page_chars(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    /// Fixture files, relative to the config file.
    #[serde(default)]
    pub fixtures: Vec<PathBuf>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    /// Role name to backend id. `default` covers unlisted roles.
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
    #[serde(default)]
    pub mock: MockConfig,
    #[serde(default)]
    pub tools: ToolsConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub resolve: ResolveConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Replaces `${VAR}` and `${VAR:-default}` with environment values.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| ConfigError::Parse("unterminated ${".into()))?;
        let expr = &after[..end];
        let (name, default) = match expr.split_once(":-") {
            Some((n, d)) => (n, Some(d)),
            None => (expr, None),
        };
        match lookup(name).or_else(|| default.map(str::to_string)) {
            Some(v) => out.push_str(&v),
            None => return Err(ConfigError::MissingEnv(name.to_string())),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&raw, &base)
    }

    pub fn parse(raw: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let text = interpolate_env(raw, |k| std::env::var(k).ok())?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.run.window_end <= self.run.window_start {
            return invalid("run.window_end must be after run.window_start".into());
        }
        if self.run.workers == 0 {
            return invalid("run.workers must be positive".into());
        }
        for (id, b) in &self.backends {
            if b.rpm() == 0 || b.max_in_flight() == 0 {
                return invalid(format!("backend {id}: rpm and max_in_flight must be positive"));
            }
            if b.kind == BackendKind::Openai && b.endpoint.is_none() {
                return invalid(format!("backend {id}: endpoint is required"));
            }
        }
        for (role, id) in &self.roles {
            if role != "default" && !Role::ALL.iter().any(|r| r.as_str() == role) {
                return invalid(format!("unknown role {role}"));
            }
            if !self.backends.contains_key(id) {
                return invalid(format!("role {role} names unknown backend {id}"));
            }
        }
        let d = &self.dedup;
        if !(d.similarity_threshold > 0.0 && d.similarity_threshold < 1.0) || d.min_points < 2 {
            return invalid("dedup.similarity_threshold must be in (0,1) and min_points >= 2".into());
        }
        if d.batch_size == 0 {
            return invalid("dedup.batch_size must be positive".into());
        }
        if self.score.bins < 2 || self.score.histogram_bins < 1 || self.score.iterations == 0 {
            return invalid("score.bins >= 2, histogram_bins >= 1 and iterations >= 1 required".into());
        }
        if !(self.score.mass > 0.0 && self.score.mass < 1.0) {
            return invalid("score.mass must be in (0,1)".into());
        }
        if self.audit.k < 2 {
            return invalid("audit.k must be at least 2".into());
        }
        if self.generate.agent_budget == 0 || self.forecast.research_budget == 0 || self.resolve.agent_budget == 0 {
            return invalid("agent budgets must be at least 1".into());
        }
        if self.seeds.max_seeds == 0 {
            return invalid("seeds.max_seeds must be at least 1".into());
        }
        if self.seeds.lookback_days == Some(0) {
            return invalid("seeds.lookback_days must be at least 1".into());
        }
        for role in Role::ALL {
            self.backend_for(role)?;
        }
        Ok(())
    }

    pub fn window(&self) -> ResolutionWindow {
        ResolutionWindow::new(self.run.window_start, self.run.window_end).expect("validated window")
    }

    pub fn backend_for(&self, role: Role) -> Result<&str, ConfigError> {
        self.roles
            .get(role.as_str())
            .or_else(|| self.roles.get("default"))
            .map(String::as_str)
            .ok_or_else(|| ConfigError::Invalid(format!("no backend for role {}", role.as_str())))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Canonical TOML text of the effective configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        match o.backend {
            Some(BackendMode::Mock) => {
                for b in self.backends.values_mut() {
                    b.kind = BackendKind::Mock;
                }
            }
            Some(BackendMode::Live) => {
                if let Some((id, _)) = self.backends.iter().find(|(_, b)| b.kind == BackendKind::Mock) {
                    return Err(ConfigError::Invalid(format!(
                        "--backend live but backend {id} is a mock"
                    )));
                }
            }
            None => {}
        }
        for (role, id) in [(Role::Forecaster, &o.forecaster), (Role::Researcher, &o.researcher)] {
            if let Some(id) = id {
                if !self.backends.contains_key(id) {
                    return Err(ConfigError::Invalid(format!("unknown backend {id}")));
                }
                self.roles.insert(role.as_str().into(), id.clone());
            }
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Mock,
    Live,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<BackendMode>,
    pub seed: Option<u64>,
    pub forecaster: Option<String>,
    pub researcher: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
window_start = "2025-10-15"
window_end = "2025-12-31"

[backends.m]
kind = "mock"

[roles]
default = "m"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = Config::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.dedup.similarity_threshold, 0.85);
        assert_eq!(c.score.iterations, 10_000);
        assert_eq!(c.backend_for(Role::Tiebreaker).unwrap(), "m");
        assert_eq!(c.resolve.adjudication, Adjudication::TiebreakFinal);
    }

    #[test]
    fn env_interpolation() {
        let env = |k: &str| (k == "A").then(|| "x".to_string());
        assert_eq!(interpolate_env("${A}/${B:-y}", env).unwrap(), "x/y");
        assert!(matches!(interpolate_env("${B}", env), Err(ConfigError::MissingEnv(_))));
    }

    #[test]
    fn unknown_backend_in_roles_is_invalid() {
        let bad = MINIMAL.replace("default = \"m\"", "default = \"m\"\nforecaster = \"zz\"");
        assert!(matches!(Config::parse(&bad, Path::new(".")), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn bad_window_is_invalid() {
        let bad = MINIMAL.replace("2025-12-31", "2025-10-01");
        assert!(Config::parse(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = Config::parse(MINIMAL, Path::new(".")).unwrap();
        let again = Config::parse(&c.snapshot(), Path::new(".")).unwrap();
        assert_eq!(c, again);
    }
}
