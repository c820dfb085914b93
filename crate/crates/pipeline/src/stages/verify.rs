//! The four verifier agents and the gate.

use ffoundry_core::gate::{QualityLabel, ResolvabilityLabel};
use ffoundry_core::{apply_gate, GateResult, Question, Rating, Verdict, VerdictKind};
use rayon::prelude::*;

use super::{decode, encode, is_transient, map_items, question_artifacts, write_attention, Attention, Ctx, Outcome};
use crate::config::Role;
use crate::gateway::{AgentRequest, GatewayError};
use crate::parse::{parse_categorical, parse_probability, ParseError};
use crate::prompts::TemplateId;
use crate::rundir::{RunError, StageSummary};

fn spec(kind: VerdictKind) -> (Role, TemplateId) {
    match kind {
        VerdictKind::Quality => (Role::VerifierQuality, TemplateId::Quality),
        VerdictKind::Ambiguity => (Role::VerifierAmbiguity, TemplateId::Ambiguity),
        VerdictKind::Resolvability => (Role::VerifierResolvability, TemplateId::Resolvability),
        VerdictKind::Forecast => (Role::VerifierForecast, TemplateId::ForecastVerifier),
    }
}

enum VerifierError {
    Gateway(GatewayError),
    Label(ParseError),
}

/// Reads a verifier's rating from its declared fields.
pub fn rating_from(kind: VerdictKind, raw: &str) -> Result<Rating, ParseError> {
    Ok(match kind {
        VerdictKind::Quality | VerdictKind::Ambiguity => {
            let l = parse_categorical(raw, &QualityLabel::LABELS)?;
            Rating::Quality(l.parse().expect("allowed label"))
        }
        VerdictKind::Resolvability => {
            let l = parse_categorical(raw, &ResolvabilityLabel::LABELS)?;
            Rating::Resolvability(l.parse().expect("allowed label"))
        }
        VerdictKind::Forecast => Rating::Forecast(parse_probability(raw)? * 100.0),
    })
}

fn run_verifier(ctx: &Ctx<'_>, q: &Question, kind: VerdictKind) -> Result<Verdict, VerifierError> {
    let (role, template) = spec(kind);
    let req = AgentRequest::research(
        &ctx.backend(role),
        template,
        question_artifacts(q),
        ctx.cfg.generate.agent_budget,
    )
    .with_fake_now(Some(ctx.now));
    let resp = ctx.gw.execute(&req).map_err(VerifierError::Gateway)?;
    let name = kind.as_str();
    let raw = &resp.fields[&format!("final_answer_{name}")];
    let rating = rating_from(kind, raw).map_err(VerifierError::Label)?;
    Ok(Verdict {
        question_id: q.id.clone(),
        kind,
        rating,
        rationale: resp
            .fields
            .get(&format!("rationale_{name}"))
            .cloned()
            .unwrap_or_default(),
        transcript_ref: resp.transcript_ref,
    })
}

pub(super) fn verify(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let questions: Vec<Question> = ctx.run.read_jsonl("questions.jsonl")?;
    let items: Vec<(String, Question)> = questions.into_iter().map(|q| (q.id.clone(), q)).collect();
    let mapped = map_items(ctx, "verify", &items, |_, q| {
        // All four verifiers run even if one fails.
        let results: Vec<Result<Verdict, VerifierError>> = VerdictKind::ALL
            .par_iter()
            .map(|k| run_verifier(ctx, q, *k))
            .collect();
        let mut verdicts = Vec::new();
        let mut transient = Vec::new();
        let mut parked = Vec::new();
        for (kind, r) in VerdictKind::ALL.iter().zip(results) {
            match r {
                Ok(v) => verdicts.push(v),
                Err(VerifierError::Gateway(e)) if is_transient(&e) => transient.push(format!("{kind}: {e}")),
                Err(VerifierError::Gateway(e)) => parked.push(format!("{kind}: {e}")),
                Err(VerifierError::Label(e)) => parked.push(format!("{kind}: {e}")),
            }
        }
        if !transient.is_empty() {
            return Err(transient.join("; "));
        }
        let out: Outcome<GateResult> = if parked.is_empty() {
            let g = apply_gate(verdicts).map_err(|e| e.to_string())?;
            Outcome::Done { value: g }
        } else {
            Outcome::Parked {
                reason: parked.join("; "),
            }
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    let mut gates = Vec::new();
    let mut attention = Vec::new();
    for (id, v) in &mapped.done {
        match decode::<Outcome<GateResult>>(v)? {
            Outcome::Done { value } => {
                if !value.passed {
                    summary.rejected += 1;
                }
                gates.push(value)
            }
            Outcome::Parked { reason } | Outcome::Rejected { reason } => {
                summary.parked += 1;
                attention.push(Attention {
                    stage: "verify".into(),
                    id: id.clone(),
                    reason,
                });
            }
        }
    }
    let verdicts: Vec<Verdict> = gates.iter().flat_map(|g| g.verdicts.iter().cloned()).collect();
    let dv = ctx.run.write_jsonl("verdicts.jsonl", &verdicts)?;
    let dg = ctx.run.write_jsonl("gate_results.jsonl", &gates)?;
    write_attention(ctx.run, "verify", attention)?;
    ctx.finish(
        "verify",
        &["questions.jsonl"],
        vec![
            ("verdicts.jsonl", dv),
            ("gate_results.jsonl", dg),
        ],
        summary,
    )
}
