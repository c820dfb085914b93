//! Pipeline stages. Each stage reads upstream outputs, maps its work items
//! through the gateway (skipping items already logged as done), and writes
//! canonical outputs sorted by id before recording its completion marker.

mod audit;
pub mod dedup;
mod forecast;
mod generate;
mod resolve;
pub mod score;
mod verify;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use ffoundry_core::{Question, Strategy};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Config, Role};
use crate::gateway::{Gateway, GatewayError};
use crate::prompts::Artifact;
use crate::rundir::{crash, RunDir, RunError, StageMarker, StageSummary, WorkRecord, WorkStatus};

pub use dedup::{read_embeddings, EmbeddingIndexEntry};
pub use resolve::due;
pub use forecast::{screen_subquestions, subq_sample};
pub use score::ScoreRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Seed,
    Generate,
    Refine,
    Verify,
    Dedup,
    Audit,
    Research,
    Forecast,
    Resolve,
    Score,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Seed,
        Stage::Generate,
        Stage::Refine,
        Stage::Verify,
        Stage::Dedup,
        Stage::Audit,
        Stage::Research,
        Stage::Forecast,
        Stage::Resolve,
        Stage::Score,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Seed => "seed",
            Stage::Generate => "generate",
            Stage::Refine => "refine",
            Stage::Verify => "verify",
            Stage::Dedup => "dedup",
            Stage::Audit => "audit",
            Stage::Research => "research",
            Stage::Forecast => "forecast",
            Stage::Resolve => "resolve",
            Stage::Score => "score",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOptions {
    /// At most this many new work items are processed.
    pub limit: Option<usize>,
    /// Resolution date; questions whose window closed before it are due.
    pub as_of: Option<NaiveDate>,
    pub strategy: Strategy,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            limit: None,
            as_of: None,
            strategy: Strategy::Direct,
        }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub run: &'a RunDir,
    pub gw: &'a Gateway,
    pub opts: &'a StageOptions,
    pub now: DateTime<Utc>,
    pool: rayon::ThreadPool,
}

impl Ctx<'_> {
    pub fn backend(&self, role: Role) -> String {
        self.cfg
            .backend_for(role)
            .expect("roles validated with the config")
            .to_string()
    }

    fn finish(
        &self,
        stage: &str,
        inputs: &[&str],
        outputs: Vec<(&str, String)>,
        summary: StageSummary,
    ) -> Result<StageSummary, RunError> {
        crash::before_marker(stage);
        let mut m = self.run.manifest()?;
        if m.run_id.is_empty() {
            m.run_id = self
                .run
                .root()
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("run")
                .to_string();
        }
        m.seed = self.cfg.run.seed;
        m.config_snapshot = self.cfg.snapshot();
        let inputs = inputs
            .iter()
            .filter_map(|f| self.run.digest(f).map(|d| (f.to_string(), d)))
            .collect();
        let outputs = outputs.into_iter().map(|(f, d)| (f.to_string(), d)).collect();
        m.stages.insert(
            stage.to_string(),
            StageMarker {
                completed_at: self.now,
                inputs,
                outputs,
                summary: summary.clone(),
            },
        );
        self.run.save_manifest(&m)?;
        Ok(summary)
    }
}

/// Result of mapping work items: the logged data of every finished item.
pub(crate) struct Mapped {
    pub done: BTreeMap<String, Value>,
    pub summary: StageSummary,
}

/// Runs `work` on every item not yet logged as done, in parallel, logging
/// each result as it completes. `Err` marks the item failed (retried on the
/// next run).
pub(crate) fn map_items<T: Sync>(
    ctx: &Ctx<'_>,
    log: &str,
    items: &[(String, T)],
    work: impl Fn(&str, &T) -> Result<Value, String> + Sync + Send,
) -> Result<Mapped, RunError> {
    let wl = ctx.run.work_log(log)?;
    let logged = wl.load()?;
    let mut done = BTreeMap::new();
    let mut todo: Vec<&(String, T)> = Vec::new();
    for it in items {
        match logged.get(&it.0) {
            Some(r) if r.status == WorkStatus::Ok => {
                done.insert(it.0.clone(), r.data.clone());
            }
            _ => todo.push(it),
        }
    }
    let skipped = done.len();
    let mut pending = 0;
    if let Some(limit) = ctx.opts.limit {
        if todo.len() > limit {
            pending = todo.len() - limit;
            todo.truncate(limit);
        }
    }
    let results: Vec<Result<(String, Result<Value, String>), RunError>> = ctx.pool.install(|| {
        todo.par_iter()
            .map(|(id, input)| {
                let r = work(id, input);
                let rec = match &r {
                    Ok(v) => WorkRecord {
                        id: id.clone(),
                        status: WorkStatus::Ok,
                        data: v.clone(),
                        error: None,
                    },
                    Err(e) => WorkRecord {
                        id: id.clone(),
                        status: WorkStatus::Failed,
                        data: Value::Null,
                        error: Some(e.clone()),
                    },
                };
                wl.append(&rec)?;
                Ok((id.clone(), r))
            })
            .collect()
    });
    let mut summary = StageSummary {
        skipped,
        pending,
        ..Default::default()
    };
    for r in results {
        let (id, r) = r?;
        match r {
            Ok(v) => {
                summary.processed += 1;
                done.insert(id, v);
            }
            Err(e) => {
                summary.failed += 1;
                tracing::warn!(stage = log, item = %id, "{e}");
            }
        }
    }
    Ok(Mapped { done, summary })
}

pub(crate) fn decode<T: DeserializeOwned>(v: &Value) -> Result<T, RunError> {
    serde_json::from_value(v.clone()).map_err(|e| RunError::Stage(format!("unreadable work record: {e}")))
}

pub(crate) fn encode<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("record serializes")
}

/// Item outcome kept in work logs: a result, or a terminal rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub(crate) enum Outcome<T> {
    Done { value: T },
    Rejected { reason: String },
    /// Needs a human look; neither passed nor rejected.
    Parked { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reject {
    pub stage: String,
    pub id: String,
    pub reason: String,
}

/// Replaces this stage's entries in the shared `rejects.jsonl`.
pub(crate) fn write_rejects(run: &RunDir, stage: &str, mut mine: Vec<Reject>) -> Result<(), RunError> {
    let mut all: Vec<Reject> = if run.exists("rejects.jsonl") {
        run.read_jsonl("rejects.jsonl")?
    } else {
        Vec::new()
    };
    all.retain(|r| r.stage != stage);
    all.append(&mut mine);
    all.sort();
    run.write_jsonl("rejects.jsonl", &all).map(|_| ())
}

/// An item a person should look at: an unreadable verifier label or resolution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attention {
    pub stage: String,
    pub id: String,
    pub reason: String,
}

/// Replaces this stage's entries in the shared `needs_attention.jsonl`.
pub(crate) fn write_attention(run: &RunDir, stage: &str, mut mine: Vec<Attention>) -> Result<(), RunError> {
    let mut all: Vec<Attention> = if run.exists("needs_attention.jsonl") {
        run.read_jsonl("needs_attention.jsonl")?
    } else {
        Vec::new()
    };
    all.retain(|r| r.stage != stage);
    all.append(&mut mine);
    all.sort();
    run.write_jsonl("needs_attention.jsonl", &all).map(|_| ())
}

/// Gateway errors that a rerun may fix are failures; the rest reject the item.
pub(crate) fn is_transient(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::BackendUnavailable { .. } | GatewayError::BudgetExhausted { .. }
    )
}

pub(crate) fn question_artifacts(q: &Question) -> Vec<Artifact> {
    let extra = q
        .extra
        .get("additional_information")
        .and_then(Value::as_str)
        .unwrap_or("None");
    vec![
        Artifact::new("Forecasting question title", q.title.clone()),
        Artifact::new("Background", q.background.clone()),
        Artifact::new("Resolution criteria", q.resolution_criteria.clone()),
        Artifact::new("Additional information", extra),
    ]
}

fn upstream(stage: Stage, strategy: Strategy) -> Vec<&'static str> {
    match stage {
        Stage::Seed => vec![],
        Stage::Generate => vec!["seed"],
        Stage::Refine => vec!["generate"],
        Stage::Verify => vec!["refine"],
        Stage::Dedup => vec!["verify"],
        Stage::Audit | Stage::Research | Stage::Resolve => vec!["dedup"],
        Stage::Forecast => match strategy {
            Strategy::Direct => vec!["research"],
            Strategy::Subquestions => vec!["research"],
        },
        Stage::Score => vec!["forecast", "resolve"],
        Stage::Report => vec![],
    }
}

/// Runs one stage against a run directory.
pub fn run_stage(
    stage: Stage,
    cfg: &Config,
    run: &RunDir,
    gw: &Gateway,
    opts: &StageOptions,
) -> Result<StageSummary, RunError> {
    for up in upstream(stage, opts.strategy) {
        run.require(up)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| RunError::Stage(e.to_string()))?;
    let ctx = Ctx {
        cfg,
        run,
        gw,
        opts,
        now: cfg.run.clock.unwrap_or_else(Utc::now),
        pool,
    };
    tracing::info!(stage = stage.as_str(), "starting");
    let summary = match stage {
        Stage::Seed => generate::seed(&ctx),
        Stage::Generate => generate::generate(&ctx),
        Stage::Refine => generate::refine(&ctx),
        Stage::Verify => verify::verify(&ctx),
        Stage::Dedup => dedup::dedup(&ctx),
        Stage::Audit => audit::audit(&ctx),
        Stage::Research => forecast::research(&ctx),
        Stage::Forecast => match opts.strategy {
            Strategy::Direct => forecast::forecast_direct(&ctx),
            Strategy::Subquestions => forecast::forecast_subq(&ctx),
        },
        Stage::Resolve => resolve::resolve(&ctx),
        Stage::Score => score::score(&ctx),
        Stage::Report => crate::report::write_report(run, cfg).map(|_| StageSummary::default()),
    }?;
    tracing::info!(
        stage = stage.as_str(),
        processed = summary.processed,
        skipped = summary.skipped,
        failed = summary.failed,
        "finished"
    );
    Ok(summary)
}
