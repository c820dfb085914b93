//! Seeds, proto-question generation and refinement.

use chrono::{DateTime, Utc};
use ffoundry_core::{ids, validate_question, ProtoQuestion, Question, ResolutionWindow, Seed};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{decode, encode, is_transient, map_items, question_artifacts, write_rejects, Ctx, Outcome, Reject};
use crate::config::Role;
use crate::gateway::{AgentRequest, AgentResponse, GatewayError};
use crate::ingest::{self, SeedQuery};
use crate::parse::{parse_instant, parse_window_end};
use crate::prompts::{Artifact, TemplateId};
use crate::rundir::{RunError, StageSummary};

pub(super) fn seed(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let q = SeedQuery {
        config: &ctx.cfg.seeds,
        base_dir: &ctx.cfg.base_dir,
        now: ctx.now,
        seed: crate::derive_seed(ctx.cfg.run.seed, "seeds"),
    };
    let seeds = ingest::ingest(&q).map_err(|e| RunError::Stage(e.to_string()))?;
    let d = ctx.run.write_jsonl("seeds.jsonl", &seeds)?;
    let summary = StageSummary {
        processed: seeds.len(),
        ..Default::default()
    };
    ctx.finish("seed", &[], vec![("seeds.jsonl", d)], summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Generated {
    protos: Vec<ProtoQuestion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

pub(super) fn generate(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let seeds: Vec<Seed> = ctx.run.read_jsonl("seeds.jsonl")?;
    let items: Vec<(String, Seed)> = seeds.into_iter().map(|s| (s.id.clone(), s)).collect();
    let backend = ctx.backend(Role::Generator);
    let max = ctx.cfg.generate.max_protos;
    let mapped = map_items(ctx, "generate", &items, |_, seed| {
        let req = AgentRequest::research(
            &backend,
            TemplateId::ProtoGeneration,
            vec![Artifact::new("Article", seed.content.clone())],
            ctx.cfg.generate.agent_budget,
        )
        .with_fake_now(Some(ctx.now));
        let out = match ctx.gw.execute(&req) {
            Ok(resp) => Outcome::Done {
                value: protos_from(&seed.id, &resp, max),
            },
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected {
                reason: e.to_string(),
            },
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    let mut protos = Vec::new();
    let mut rejects = Vec::new();
    for (id, v) in &mapped.done {
        match decode::<Outcome<Generated>>(v)? {
            Outcome::Done { value } => {
                for w in value.warnings {
                    tracing::warn!(seed = %id, "{w}");
                }
                protos.extend(value.protos);
            }
            Outcome::Rejected { reason } | Outcome::Parked { reason } => {
                summary.rejected += 1;
                rejects.push(Reject {
                    stage: "generate".into(),
                    id: id.clone(),
                    reason,
                });
            }
        }
    }
    protos.sort_by(|a, b| a.id.cmp(&b.id));
    let d = ctx.run.write_jsonl("protos.jsonl", &protos)?;
    write_rejects(ctx.run, "generate", rejects)?;
    ctx.finish("generate", &["seeds.jsonl"], vec![("protos.jsonl", d)], summary)
}

/// Keeps the first `max` listed items in document order; repeated titles
/// within one seed collapse to one proto.
fn protos_from(seed_id: &str, resp: &AgentResponse, max: usize) -> Generated {
    let mut warnings = Vec::new();
    let mut items = resp.items.clone();
    if items.len() > max {
        warnings.push(format!("{} proto-questions listed, keeping the first {max}", items.len()));
        items.truncate(max);
    }
    let mut protos: Vec<ProtoQuestion> = Vec::new();
    for it in items {
        let mut p = ProtoQuestion::new(seed_id, it["question"].clone(), it["rationale"].clone());
        if protos.iter().any(|q| q.id == p.id) {
            continue;
        }
        p.extra.insert("transcript_ref".into(), Value::String(resp.transcript_ref.clone()));
        protos.push(p);
    }
    Generated { protos, warnings }
}

pub(super) fn refine(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let protos: Vec<ProtoQuestion> = ctx.run.read_jsonl("protos.jsonl")?;
    let items: Vec<(String, ProtoQuestion)> = protos.into_iter().map(|p| (p.id.clone(), p)).collect();
    let window = ctx.cfg.window();
    let mapped = map_items(ctx, "refine", &items, |_, proto| {
        let out = match refine_one(ctx, proto, &window) {
            Ok(out) => out,
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected {
                reason: e.to_string(),
            },
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    let mut questions = Vec::new();
    let mut rejects = Vec::new();
    for (id, v) in &mapped.done {
        match decode::<Outcome<Question>>(v)? {
            Outcome::Done { value } => questions.push(value),
            Outcome::Rejected { reason } | Outcome::Parked { reason } => {
                summary.rejected += 1;
                rejects.push(Reject {
                    stage: "refine".into(),
                    id: id.clone(),
                    reason,
                });
            }
        }
    }
    questions.sort_by(|a, b| a.id.cmp(&b.id));
    let d = ctx.run.write_jsonl("questions.jsonl", &questions)?;
    write_rejects(ctx.run, "refine", rejects)?;
    ctx.finish("refine", &["protos.jsonl"], vec![("questions.jsonl", d)], summary)
}

/// Builds a question from a refinement reply, or explains why it is invalid.
pub(crate) fn question_from(
    proto: &ProtoQuestion,
    resp: &AgentResponse,
    window: &ResolutionWindow,
    now: DateTime<Utc>,
) -> Result<Question, Vec<String>> {
    let f = &resp.fields;
    let get = |k: &str| f.get(k).cloned().unwrap_or_default();
    let mut problems = Vec::new();
    let start = parse_instant(&get("window_start")).map_err(|e| problems.push(format!("window_start: {e}")));
    let end = parse_window_end(&get("window_end")).map_err(|e| problems.push(format!("window_end: {e}")));
    let (Ok(start), Ok(end)) = (start, end) else {
        return Err(problems);
    };
    let mut q = Question {
        id: ids::question_id(&proto.id),
        proto_id: proto.id.clone(),
        title: get("title"),
        background: get("background"),
        resolution_criteria: get("resolution_criteria"),
        window_start: start,
        window_end: end,
        created_at: now,
        extra: Default::default(),
    };
    q.extra.insert("seed_id".into(), Value::String(proto.seed_id.clone()));
    q.extra.insert("transcript_ref".into(), Value::String(resp.transcript_ref.clone()));
    let report = validate_question(&q, window);
    if report.is_valid() {
        Ok(q)
    } else {
        Err(report.reasons())
    }
}

fn refine_one(
    ctx: &Ctx<'_>,
    proto: &ProtoQuestion,
    window: &ResolutionWindow,
) -> Result<Outcome<Question>, GatewayError> {
    let backend = ctx.backend(Role::Refiner);
    let mut artifacts = vec![
        Artifact::new("Original question", proto.title.clone()),
        Artifact::new("Rationale", proto.rationale.clone()),
    ];
    let request = |artifacts: Vec<Artifact>| {
        AgentRequest::research(&backend, TemplateId::Refinement, artifacts, ctx.cfg.generate.agent_budget)
            .with_fake_now(Some(ctx.now))
    };
    let resp = ctx.gw.execute(&request(artifacts.clone()))?;
    let mut question = question_from(proto, &resp, window, ctx.now);
    if let Err(problems) = &question {
        artifacts.push(Artifact::new(
            "Correction",
            format!(
                "Your previous answer was rejected: {}. The question must resolve between {} and {} (UTC), \
                 and window_start and window_end must be explicit dates inside that range.",
                problems.join("; "),
                window.start,
                window.end
            ),
        ));
        let resp = ctx.gw.execute(&request(artifacts))?;
        question = question_from(proto, &resp, window, ctx.now);
    }
    let mut q = match question {
        Ok(q) => q,
        Err(problems) => {
            return Ok(Outcome::Rejected {
                reason: format!("refinement rejected: {}", problems.join("; ")),
            })
        }
    };
    if ctx.cfg.generate.background_research {
        let req = AgentRequest::research(
            &ctx.backend(Role::BackgroundResearcher),
            TemplateId::BackgroundResearch,
            question_artifacts(&q),
            ctx.cfg.generate.agent_budget,
        )
        .with_fake_now(Some(ctx.now));
        let resp = ctx.gw.execute(&req)?;
        q.extra
            .insert("additional_information".into(), Value::String(resp.text));
    }
    Ok(Outcome::Done { value: q })
}
