//! Research dossiers, direct forecasts and the subquestion strategy.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use ffoundry_core::forecast::MAX_SUBQUESTIONS;
use ffoundry_core::{
    ids, ForecastRecord, Question, ResearchDossier, Strategy, Subquestion, SubquestionBundle,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use super::{decode, encode, is_transient, map_items, question_artifacts, write_rejects, Ctx, Outcome, Reject};
use crate::config::Role;
use crate::derive_seed;
use crate::gateway::{AgentRequest, GatewayError};
use crate::parse::parse_probability;
use crate::prompts::{Artifact, TemplateId};
use crate::rundir::{RunError, StageSummary};

pub const PARSE_FAILURE: &str = "parse_failure";
pub const NO_SUBQUESTIONS: &str = "no_subquestions";

fn fake_now(ctx: &Ctx<'_>) -> DateTime<Utc> {
    ctx.cfg.forecast.fake_now.unwrap_or(ctx.now)
}

fn collect<T: serde::de::DeserializeOwned>(
    stage: &str,
    done: &BTreeMap<String, Value>,
    summary: &mut StageSummary,
    rejects: &mut Vec<Reject>,
) -> Result<Vec<T>, RunError> {
    let mut out = Vec::new();
    for (id, v) in done {
        match decode::<Outcome<T>>(v)? {
            Outcome::Done { value } => out.push(value),
            Outcome::Rejected { reason } | Outcome::Parked { reason } => {
                summary.rejected += 1;
                rejects.push(Reject {
                    stage: stage.into(),
                    id: id.clone(),
                    reason,
                });
            }
        }
    }
    Ok(out)
}

fn research_one(
    ctx: &Ctx<'_>,
    backend: &str,
    question_id: &str,
    artifacts: Vec<Artifact>,
    now: DateTime<Utc>,
) -> Result<ResearchDossier, GatewayError> {
    let req = AgentRequest::research(backend, TemplateId::Research, artifacts, ctx.cfg.forecast.research_budget)
        .with_fake_now(Some(now));
    let resp = ctx.gw.execute(&req)?;
    Ok(ResearchDossier {
        question_id: question_id.to_string(),
        researcher_backend: backend.to_string(),
        dossier_text: resp.text,
        researched_at: ctx.now,
        fake_now: now,
        transcript_ref: resp.transcript_ref,
        extra: Default::default(),
    })
}

pub(super) fn research(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let qs: Vec<Question> = ctx.run.read_jsonl("final_questions.jsonl")?;
    let backend = ctx.backend(Role::Researcher);
    let now = fake_now(ctx);
    let items: Vec<(String, Question)> = qs.into_iter().map(|q| (format!("{}@{backend}", q.id), q)).collect();
    let mapped = map_items(ctx, "research", &items, |_, q| {
        if now > q.window_end {
            return Ok(encode(&Outcome::<ResearchDossier>::Rejected {
                reason: format!("research date {now} is after the question closes ({})", q.window_end),
            }));
        }
        let out = match research_one(ctx, &backend, &q.id, question_artifacts(q), now) {
            Ok(d) => Outcome::Done { value: d },
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected { reason: e.to_string() },
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    let mut rejects = Vec::new();
    let mine: Vec<ResearchDossier> = collect("research", &mapped.done, &mut summary, &mut rejects)?;
    // Dossiers from other researchers are kept.
    let mut all: Vec<ResearchDossier> = if ctx.run.exists("dossiers.jsonl") {
        ctx.run.read_jsonl("dossiers.jsonl")?
    } else {
        Vec::new()
    };
    all.retain(|d| d.researcher_backend != backend);
    all.extend(mine);
    all.sort_by_key(|d| d.reference());
    let d = ctx.run.write_jsonl("dossiers.jsonl", &all)?;
    write_rejects(ctx.run, "research", rejects)?;
    ctx.finish("research", &["final_questions.jsonl"], vec![("dossiers.jsonl", d)], summary)
}

/// Probability from a forecast reply, flagged rather than failed when unreadable.
fn read_probability(res: Result<crate::gateway::AgentResponse, GatewayError>) -> Result<(Option<f64>, Vec<String>, Option<String>), GatewayError> {
    match res {
        Ok(resp) => match parse_probability(&resp.fields["final_answer_forecast"]) {
            Ok(p) => Ok((Some(p), Vec::new(), Some(resp.transcript_ref))),
            Err(e) => {
                tracing::warn!("unreadable forecast: {e}");
                Ok((None, vec![PARSE_FAILURE.into()], Some(resp.transcript_ref)))
            }
        },
        Err(GatewayError::ParseFailure { transcript_ref, .. }) => {
            Ok((None, vec![PARSE_FAILURE.into()], Some(transcript_ref)))
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn forecast_with(
    ctx: &Ctx<'_>,
    backend: &str,
    template: TemplateId,
    question_id: &str,
    mut artifacts: Vec<Artifact>,
    dossier: &ResearchDossier,
    strategy: Strategy,
    extra_artifact: Option<Artifact>,
) -> Result<ForecastRecord, GatewayError> {
    artifacts.push(Artifact::new("Research summary", dossier.dossier_text.clone()));
    artifacts.extend(extra_artifact);
    let req = AgentRequest::completion(backend, template, artifacts).with_fake_now(Some(dossier.fake_now));
    let (probability, flags, transcript_ref) = read_probability(ctx.gw.execute(&req))?;
    Ok(ForecastRecord {
        question_id: question_id.to_string(),
        forecaster_backend: backend.to_string(),
        dossier_ref: dossier.reference(),
        probability,
        strategy,
        made_at: ctx.now,
        fake_now: dossier.fake_now,
        flags,
        transcript_ref,
        extra: Default::default(),
    })
}

/// Final questions paired with this researcher's dossier; questions without
/// one are counted as pending.
fn with_dossiers(ctx: &Ctx<'_>, researcher: &str) -> Result<(Vec<(Question, ResearchDossier)>, usize), RunError> {
    let qs: Vec<Question> = ctx.run.read_jsonl("final_questions.jsonl")?;
    let dossiers: BTreeMap<String, ResearchDossier> = ctx
        .run
        .read_jsonl::<ResearchDossier>("dossiers.jsonl")?
        .into_iter()
        .map(|d| (d.reference(), d))
        .collect();
    let mut out = Vec::new();
    let mut missing = 0;
    for q in qs {
        match dossiers.get(&format!("{}@{researcher}", q.id)) {
            Some(d) => out.push((q, d.clone())),
            None => missing += 1,
        }
    }
    if missing > 0 {
        tracing::warn!("{missing} questions have no dossier from {researcher}; run research first");
    }
    Ok((out, missing))
}

fn replace_model(file: &str, ctx: &Ctx<'_>, key: &str, mine: Vec<ForecastRecord>) -> Result<String, RunError> {
    let mut all: Vec<ForecastRecord> = if ctx.run.exists(file) {
        ctx.run.read_jsonl(file)?
    } else {
        Vec::new()
    };
    all.retain(|f| f.model_key() != key);
    all.extend(mine);
    all.sort_by(|a, b| (a.model_key(), &a.question_id).cmp(&(b.model_key(), &b.question_id)));
    ctx.run.write_jsonl(file, &all)
}

pub(super) fn forecast_direct(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let forecaster = ctx.backend(Role::Forecaster);
    let researcher = ctx.backend(Role::Researcher);
    let (pairs, missing) = with_dossiers(ctx, &researcher)?;
    let items: Vec<(String, (Question, ResearchDossier))> = pairs
        .into_iter()
        .map(|(q, d)| (format!("{}|{forecaster}|{researcher}|direct", q.id), (q, d)))
        .collect();
    let mapped = map_items(ctx, "forecast", &items, |_, (q, d)| {
        let out = match forecast_with(ctx, &forecaster, TemplateId::Forecast, &q.id, question_artifacts(q), d, Strategy::Direct, None) {
            Ok(f) => Outcome::Done { value: f },
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected { reason: e.to_string() },
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    summary.pending += missing;
    let mut rejects = Vec::new();
    let mine: Vec<ForecastRecord> = collect("forecast", &mapped.done, &mut summary, &mut rejects)?;
    let key = format!("{forecaster}/{researcher}/{}", Strategy::Direct.as_str());
    let d = replace_model("forecasts.jsonl", ctx, &key, mine)?;
    write_rejects(ctx.run, "forecast", rejects)?;
    ctx.finish(
        "forecast",
        &["final_questions.jsonl", "dossiers.jsonl"],
        vec![("forecasts.jsonl", d)],
        summary,
    )
}

/// The parents that get the subquestion strategy: a seeded sample of the final questions.
pub fn subq_sample(ids: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "subq"));
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, sorted.len(), n.min(sorted.len()))
        .into_iter()
        .map(|i| sorted[i].clone())
        .collect();
    picked.sort();
    picked
}

/// Drops subquestions that restate the parent and caps the list.
pub fn screen_subquestions(
    parent: &Question,
    items: Vec<BTreeMap<String, String>>,
) -> (Vec<Subquestion>, Vec<String>) {
    let mut warnings = Vec::new();
    let title = parent.title.trim().to_lowercase();
    let mut subs: Vec<Subquestion> = Vec::new();
    for it in items {
        let s = Subquestion {
            id: ids::subquestion_id(&parent.id, &it["subquestion"]),
            title: it["subquestion"].clone(),
            background: it["background"].clone(),
            resolution_criteria: it["resolution_criteria"].clone(),
        };
        let leaks = [&s.title, &s.background, &s.resolution_criteria]
            .iter()
            .any(|f| !title.is_empty() && f.to_lowercase().contains(&title));
        if leaks {
            warnings.push(format!("dropped subquestion {:?}: it restates the parent question", s.title));
        } else if subs.iter().any(|x| x.id == s.id) {
            warnings.push(format!("dropped repeated subquestion {:?}", s.title));
        } else {
            subs.push(s);
        }
    }
    if subs.len() > MAX_SUBQUESTIONS {
        warnings.push(format!("{} subquestions listed, keeping the first {MAX_SUBQUESTIONS}", subs.len()));
        subs.truncate(MAX_SUBQUESTIONS);
    }
    (subs, warnings)
}

fn sub_artifacts(s: &Subquestion) -> Vec<Artifact> {
    vec![
        Artifact::new("Forecasting question title", s.title.clone()),
        Artifact::new("Background", s.background.clone()),
        Artifact::new("Resolution criteria", s.resolution_criteria.clone()),
        Artifact::new("Additional information", "None"),
    ]
}

fn compose(subs: &[Subquestion], forecasts: &[ForecastRecord], dossiers: &[ResearchDossier]) -> String {
    let mut out = String::new();
    for ((s, f), d) in subs.iter().zip(forecasts).zip(dossiers) {
        let p = f
            .probability
            .map_or("no forecast".to_string(), |p| format!("{:.1}%", p * 100.0));
        out.push_str(&format!(
            "Subquestion: {}\nResolution criteria: {}\nForecast: {p}\nResearch: {}\n\n",
            s.title, s.resolution_criteria, d.dossier_text
        ));
    }
    out.trim_end().to_string()
}

fn subq_one(
    ctx: &Ctx<'_>,
    q: &Question,
    dossier: &ResearchDossier,
    forecaster: &str,
) -> Result<(SubquestionBundle, ForecastRecord), GatewayError> {
    let decomp = AgentRequest::completion(
        &ctx.backend(Role::Decomposer),
        TemplateId::Decomposition,
        question_artifacts(q),
    )
    .with_fake_now(Some(dossier.fake_now));
    let resp = ctx.gw.execute(&decomp)?;
    let (subs, warnings) = screen_subquestions(q, resp.items);
    for w in &warnings {
        tracing::warn!(question = %q.id, "{w}");
    }
    if subs.is_empty() {
        let mut f = forecast_with(ctx, forecaster, TemplateId::Forecast, &q.id, question_artifacts(q), dossier, Strategy::Subquestions, None)?;
        f.flags.push(NO_SUBQUESTIONS.into());
        let bundle = SubquestionBundle {
            parent_id: q.id.clone(),
            subquestions: Vec::new(),
            subdossiers: Vec::new(),
            subforecasts: Vec::new(),
            composed_dossier: String::new(),
            warnings,
        };
        return Ok((bundle, f));
    }
    let sub_researcher = ctx.backend(Role::SubquestionResearcher);
    let sub_forecaster = ctx.backend(Role::SubquestionForecaster);
    let results: Vec<Result<(ResearchDossier, ForecastRecord), GatewayError>> = subs
        .par_iter()
        .map(|s| {
            let d = research_one(ctx, &sub_researcher, &s.id, sub_artifacts(s), dossier.fake_now)?;
            let f = forecast_with(ctx, &sub_forecaster, TemplateId::Forecast, &s.id, sub_artifacts(s), &d, Strategy::Direct, None)?;
            Ok((d, f))
        })
        .collect();
    let mut subdossiers = Vec::new();
    let mut subforecasts = Vec::new();
    for r in results {
        let (d, f) = r?;
        subdossiers.push(d);
        subforecasts.push(f);
    }
    let composed = compose(&subs, &subforecasts, &subdossiers);
    let f = forecast_with(
        ctx,
        forecaster,
        TemplateId::SubquestionForecast,
        &q.id,
        question_artifacts(q),
        dossier,
        Strategy::Subquestions,
        Some(Artifact::new("subforecasts", composed.clone())),
    )?;
    let bundle = SubquestionBundle {
        parent_id: q.id.clone(),
        subquestions: subs,
        subdossiers,
        subforecasts,
        composed_dossier: composed,
        warnings,
    };
    Ok((bundle, f))
}

pub(super) fn forecast_subq(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let forecaster = ctx.backend(Role::Forecaster);
    let researcher = ctx.backend(Role::Researcher);
    let (pairs, _) = with_dossiers(ctx, &researcher)?;
    let final_ids: Vec<String> = ctx
        .run
        .read_jsonl::<Question>("final_questions.jsonl")?
        .into_iter()
        .map(|q| q.id)
        .collect();
    let chosen = subq_sample(&final_ids, ctx.cfg.forecast.subq_sample, ctx.cfg.run.seed);
    let by_id: BTreeMap<String, (Question, ResearchDossier)> =
        pairs.into_iter().map(|(q, d)| (q.id.clone(), (q, d))).collect();
    let mut missing = 0;
    let mut items = Vec::new();
    for id in &chosen {
        match by_id.get(id) {
            Some(p) => items.push((format!("{id}|{forecaster}|{researcher}|subq"), p.clone())),
            None => missing += 1,
        }
    }
    let mapped = map_items(ctx, "forecast_subq", &items, |_, (q, d)| {
        let out = match subq_one(ctx, q, d, &forecaster) {
            Ok(v) => Outcome::Done { value: v },
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected { reason: e.to_string() },
        };
        Ok(encode(&out))
    })?;
    let mut summary = mapped.summary;
    summary.pending += missing;
    let mut rejects = Vec::new();
    let done: Vec<(SubquestionBundle, ForecastRecord)> =
        collect("forecast_subq", &mapped.done, &mut summary, &mut rejects)?;
    let key = format!("{forecaster}/{researcher}/{}", Strategy::Subquestions.as_str());
    let mut bundles: Vec<SubquestionBundle> = if ctx.run.exists("subq_bundles.jsonl") {
        ctx.run.read_jsonl("subq_bundles.jsonl")?
    } else {
        Vec::new()
    };
    let forecasts: Vec<ForecastRecord> = done.iter().map(|(_, f)| f.clone()).collect();
    // Bundles are per parent; the latest forecaster's bundle wins.
    let mine: BTreeMap<String, SubquestionBundle> =
        done.into_iter().map(|(b, _)| (b.parent_id.clone(), b)).collect();
    bundles.retain(|b| !mine.contains_key(&b.parent_id));
    bundles.extend(mine.into_values());
    bundles.sort_by(|a, b| a.parent_id.cmp(&b.parent_id));
    let db = ctx.run.write_jsonl("subq_bundles.jsonl", &bundles)?;
    let df = replace_model("subq_forecasts.jsonl", ctx, &key, forecasts)?;
    write_rejects(ctx.run, "forecast_subq", rejects)?;
    ctx.finish(
        "forecast_subq",
        &["final_questions.jsonl", "dossiers.jsonl"],
        vec![("subq_bundles.jsonl", db), ("subq_forecasts.jsonl", df)],
        summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parent() -> Question {
        let t = Utc::now();
        Question {
            id: "q1".into(),
            proto_id: "p".into(),
            title: "Will the bridge reopen by June?".into(),
            background: String::new(),
            resolution_criteria: String::new(),
            window_start: t,
            window_end: t,
            created_at: t,
            extra: Default::default(),
        }
    }

    fn item(t: &str, bg: &str) -> BTreeMap<String, String> {
        [("subquestion", t), ("background", bg), ("resolution_criteria", "official notice")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn screening_drops_restatements_and_caps() {
        let mut items = vec![item("x", "Context: will the bridge reopen by june? maybe")];
        for i in 0..7 {
            items.push(item(&format!("Sub {i}?"), "b"));
        }
        let (subs, warnings) = screen_subquestions(&parent(), items);
        assert_eq!(subs.len(), MAX_SUBQUESTIONS);
        assert_eq!(subs[0].title, "Sub 0?");
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn sample_is_seeded_and_bounded() {
        let ids: Vec<String> = (0..30).map(|i| format!("q{i:02}")).collect();
        let a = subq_sample(&ids, 5, 7);
        assert_eq!(a, subq_sample(&ids, 5, 7));
        assert_eq!(a.len(), 5);
        assert_eq!(subq_sample(&ids, 100, 7).len(), 30);
    }
}
