//! Three primary resolvers, a tiebreaker for split votes, and adjudication.

use chrono::{DateTime, NaiveDate, Utc};
use ffoundry_core::resolution::{settle, unanimous};
use ffoundry_core::{AgentSlot, FinalResolution, Question, ResolutionVote};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    decode, encode, is_transient, map_items, question_artifacts, write_attention, write_rejects, Attention, Ctx,
    Outcome, Reject,
};
use crate::config::Role;
use crate::gateway::{AgentRequest, GatewayError};
use crate::parse::parse_resolution;
use crate::prompts::{Artifact, TemplateId};
use crate::rundir::{RunError, StageSummary};

/// A question is due once its window closed before the resolution date.
pub fn due(q: &Question, as_of: NaiveDate) -> bool {
    let cutoff: DateTime<Utc> = as_of.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    q.window_end < cutoff
}

fn slot_spec(slot: AgentSlot) -> (Role, TemplateId) {
    match slot {
        AgentSlot::PrimaryA => (Role::ResolverA, TemplateId::ResolutionV1),
        AgentSlot::PrimaryB => (Role::ResolverB, TemplateId::ResolutionV1),
        AgentSlot::PrimaryC => (Role::ResolverC, TemplateId::ResolutionV2),
        AgentSlot::Tiebreak => (Role::Tiebreaker, TemplateId::ResolutionV2),
    }
}

enum VoteError {
    Gateway(GatewayError),
    Unreadable(String),
}

fn vote_once(ctx: &Ctx<'_>, q: &Question, slot: AgentSlot, as_of: NaiveDate) -> Result<ResolutionVote, VoteError> {
    let (role, template) = slot_spec(slot);
    let mut artifacts = question_artifacts(q);
    artifacts.push(Artifact::new("Question date", as_of.to_string()));
    let req = AgentRequest::research(&ctx.backend(role), template, artifacts, ctx.cfg.resolve.agent_budget);
    let resp = match ctx.gw.execute(&req) {
        Ok(r) => r,
        Err(e @ GatewayError::ParseFailure { .. }) => return Err(VoteError::Unreadable(e.to_string())),
        Err(e) => return Err(VoteError::Gateway(e)),
    };
    let verdict = parse_resolution(&resp.fields["resolution"]).map_err(|e| VoteError::Unreadable(e.to_string()))?;
    Ok(ResolutionVote {
        question_id: q.id.clone(),
        agent_slot: slot,
        verdict,
        derivation: resp.fields.get("resolution_derivation").cloned().unwrap_or_default(),
        weaknesses: resp.fields.get("resolution_weaknesses").cloned().unwrap_or_default(),
        transcript_ref: resp.transcript_ref,
    })
}

/// An unreadable vote is recast once.
fn vote(ctx: &Ctx<'_>, q: &Question, slot: AgentSlot, as_of: NaiveDate) -> Result<ResolutionVote, VoteError> {
    match vote_once(ctx, q, slot, as_of) {
        Err(VoteError::Unreadable(first)) => {
            tracing::warn!(question = %q.id, slot = slot.as_str(), "recasting unreadable vote: {first}");
            vote_once(ctx, q, slot, as_of)
        }
        r => r,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Resolved {
    resolution: FinalResolution,
}

fn resolve_one(ctx: &Ctx<'_>, q: &Question, as_of: NaiveDate) -> Result<Outcome<Resolved>, String> {
    let settle_err = |e: VoteError| match e {
        VoteError::Gateway(e) if is_transient(&e) => Err(e.to_string()),
        VoteError::Gateway(e) => Ok(Outcome::Rejected { reason: e.to_string() }),
        VoteError::Unreadable(r) => Ok(Outcome::Parked { reason: r }),
    };
    let primaries: Vec<Result<ResolutionVote, VoteError>> =
        AgentSlot::PRIMARIES.par_iter().map(|s| vote(ctx, q, *s, as_of)).collect();
    let mut votes = Vec::with_capacity(3);
    for r in primaries {
        match r {
            Ok(v) => votes.push(v),
            Err(e) => return settle_err(e),
        }
    }
    let primaries: [ResolutionVote; 3] = votes.try_into().expect("three primaries");
    let resolution = match unanimous(&primaries).map_err(|e| e.to_string())? {
        Some(r) => r,
        None => {
            let tb = match vote(ctx, q, AgentSlot::Tiebreak, as_of) {
                Ok(v) => v,
                Err(e) => return settle_err(e),
            };
            settle(&primaries, tb, ctx.cfg.resolve.adjudication).map_err(|e| e.to_string())?
        }
    };
    Ok(Outcome::Done {
        value: Resolved { resolution },
    })
}

pub(super) fn resolve(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let as_of = ctx.opts.as_of.unwrap_or_else(|| ctx.now.date_naive());
    let qs: Vec<Question> = ctx.run.read_jsonl("final_questions.jsonl")?;
    let items: Vec<(String, Question)> = qs
        .into_iter()
        .filter(|q| due(q, as_of))
        .map(|q| (q.id.clone(), q))
        .collect();
    tracing::info!("{} questions due as of {as_of}", items.len());
    let mapped = map_items(ctx, "resolve", &items, |_, q| resolve_one(ctx, q, as_of).map(|o| encode(&o)))?;
    let mut summary = mapped.summary;
    let mut resolutions = Vec::new();
    let mut rejects = Vec::new();
    let mut attention = Vec::new();
    for (id, v) in &mapped.done {
        match decode::<Outcome<Resolved>>(v)? {
            Outcome::Done { value } => resolutions.push(value.resolution),
            Outcome::Rejected { reason } => {
                summary.rejected += 1;
                rejects.push(Reject {
                    stage: "resolve".into(),
                    id: id.clone(),
                    reason,
                });
            }
            Outcome::Parked { reason } => {
                summary.parked += 1;
                attention.push(Attention {
                    stage: "resolve".into(),
                    id: id.clone(),
                    reason,
                });
            }
        }
    }
    let mut votes: Vec<ResolutionVote> = resolutions.iter().flat_map(|r| r.votes.iter().cloned()).collect();
    votes.sort_by(|a, b| (&a.question_id, a.agent_slot).cmp(&(&b.question_id, b.agent_slot)));
    let dv = ctx.run.write_jsonl("votes.jsonl", &votes)?;
    let dr = ctx.run.write_jsonl("resolutions.jsonl", &resolutions)?;
    write_rejects(ctx.run, "resolve", rejects)?;
    write_attention(ctx.run, "resolve", attention)?;
    ctx.finish(
        "resolve",
        &["final_questions.jsonl"],
        vec![("votes.jsonl", dv), ("resolutions.jsonl", dr)],
        summary,
    )
}
