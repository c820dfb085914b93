//! Brier scores with decompositions and intervals, ranking stability,
//! forecast distributions and the resolver error-rate interval.

use std::collections::{BTreeMap, BTreeSet};

use ffoundry_core::metrics::{
    beta_interval, bootstrap_ci, brier_terms, decompose, distribution_summary, ranking_stability,
    CredibleInterval, DistributionSummary, ModelForecasts, RankingStability,
};
use ffoundry_core::{FinalResolution, FinalVerdict, ForecastRecord, OutcomeSet, Strategy, SubquestionBundle};
use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::derive_seed;
use crate::rundir::{RunError, StageSummary};

pub const FULL: &str = "full";
pub const SUBQ_SUBSET: &str = "subq_parents";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub subset: String,
    /// Resolved questions with a parsed forecast.
    pub n: usize,
    /// Resolved questions in the subset without a parsed forecast.
    pub missing: usize,
    pub brier: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mass: f64,
    pub calibration: f64,
    pub refinement: f64,
    pub uncertainty: f64,
    pub raw_brier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub model: String,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_forecast: Option<f64>,
    pub observed_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub comparison: String,
    pub stability: RankingStability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub model: String,
    pub summary: DistributionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub checked: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub interval: CredibleInterval,
}

#[derive(Debug, Clone, Deserialize)]
struct HumanResolution {
    question_id: String,
    verdict: FinalVerdict,
}

fn stage_err(e: impl std::fmt::Display) -> RunError {
    RunError::Stage(e.to_string())
}

/// Parsed forecasts of one model restricted to `scope`.
fn in_scope(records: &[&ForecastRecord], scope: Option<&BTreeSet<String>>) -> Vec<(String, f64)> {
    records
        .iter()
        .filter(|f| scope.is_none_or(|s| s.contains(&f.question_id)))
        .filter_map(|f| f.probability.map(|p| (f.question_id.clone(), p)))
        .collect()
}

fn score_row(
    ctx: &Ctx<'_>,
    model: &str,
    subset: &str,
    forecasts: &[(String, f64)],
    outcomes: &OutcomeSet,
    resolved_in_scope: usize,
) -> Result<Option<(ScoreRow, Vec<ReliabilityRow>, DistributionSummary)>, RunError> {
    let (ids, ps, os) = outcomes.align(forecasts).map_err(stage_err)?;
    if ids.is_empty() {
        tracing::warn!(model, subset, "no resolved questions to score");
        return Ok(None);
    }
    let sc = &ctx.cfg.score;
    let (bins, dec) = decompose(&ps, &os, sc.bins).map_err(stage_err)?;
    let terms = brier_terms(&ps, &os).map_err(stage_err)?;
    let per_q: Vec<(String, f64)> = ids.iter().cloned().zip(terms).collect();
    let seed = derive_seed(ctx.cfg.run.seed, &format!("bootstrap:{model}:{subset}"));
    let ci = bootstrap_ci(&per_q, sc.iterations, sc.mass, seed).map_err(stage_err)?;
    let row = ScoreRow {
        model: model.to_string(),
        subset: subset.to_string(),
        n: ids.len(),
        missing: resolved_in_scope.saturating_sub(ids.len()),
        brier: dec.brier,
        ci_lo: ci.lo,
        ci_hi: ci.hi,
        mass: ci.mass,
        calibration: dec.calibration,
        refinement: dec.refinement,
        uncertainty: dec.uncertainty,
        raw_brier: dec.raw_brier,
    };
    let rel = bins
        .bins
        .iter()
        .map(|b| ReliabilityRow {
            model: model.to_string(),
            bin: b.index,
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            mean_forecast: b.mean_forecast,
            observed_frequency: b.observed_frequency,
        })
        .collect();
    let dist = distribution_summary(&ps, &os, sc.histogram_bins).map_err(stage_err)?;
    Ok(Some((row, rel, dist)))
}

fn ground_truth(ctx: &Ctx<'_>, resolutions: &[FinalResolution]) -> Result<Vec<GroundTruthRow>, RunError> {
    let Some(path) = &ctx.cfg.score.ground_truth else {
        return Ok(Vec::new());
    };
    let human: Vec<HumanResolution> = crate::rundir::read_jsonl_file(&ctx.cfg.resolve_path(path))?;
    let ours: BTreeMap<&str, FinalVerdict> =
        resolutions.iter().map(|r| (r.question_id.as_str(), r.verdict)).collect();
    let mut checked = 0u64;
    let mut errors = 0u64;
    for h in &human {
        if let Some(v) = ours.get(h.question_id.as_str()) {
            checked += 1;
            errors += u64::from(*v != h.verdict);
        }
    }
    if checked == 0 {
        tracing::warn!("no ground-truth question was resolved in this run");
        return Ok(Vec::new());
    }
    let interval = beta_interval(errors, checked, ctx.cfg.score.mass).map_err(stage_err)?;
    Ok(vec![GroundTruthRow {
        checked: checked as usize,
        errors: errors as usize,
        error_rate: errors as f64 / checked as f64,
        interval,
    }])
}

pub(super) fn score(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let resolutions: Vec<FinalResolution> = ctx.run.read_jsonl("resolutions.jsonl")?;
    let outcomes = OutcomeSet::from_resolutions(&resolutions);
    let mut records: Vec<ForecastRecord> = ctx.run.read_jsonl("forecasts.jsonl")?;
    let mut inputs = vec!["resolutions.jsonl", "forecasts.jsonl"];
    let mut subset: BTreeSet<String> = BTreeSet::new();
    if ctx.run.exists("subq_forecasts.jsonl") {
        records.extend(ctx.run.read_jsonl::<ForecastRecord>("subq_forecasts.jsonl")?);
        let bundles: Vec<SubquestionBundle> = ctx.run.read_jsonl("subq_bundles.jsonl")?;
        subset = bundles.into_iter().map(|b| b.parent_id).collect();
        inputs.extend(["subq_forecasts.jsonl", "subq_bundles.jsonl"]);
    }
    if let Some(bad) = records.iter().find(|f| !f.is_valid()) {
        return Err(RunError::Stage(format!(
            "forecast for {} has probability {:?} outside [0, 1]",
            bad.question_id, bad.probability
        )));
    }
    let mut by_model: BTreeMap<String, Vec<&ForecastRecord>> = BTreeMap::new();
    for f in &records {
        by_model.entry(f.model_key()).or_default().push(f);
    }
    let resolved_all = outcomes.len();
    let resolved_subset = subset.iter().filter(|id| outcomes.get(id).is_some()).count();

    let mut rows = Vec::new();
    let mut reliability = Vec::new();
    let mut distribution = Vec::new();
    let mut full_models = Vec::new();
    let mut subset_models = Vec::new();
    for (model, recs) in &by_model {
        let is_subq = recs.iter().any(|f| f.strategy == Strategy::Subquestions);
        if !is_subq {
            let fs = in_scope(recs, None);
            if let Some((row, rel, dist)) = score_row(ctx, model, FULL, &fs, &outcomes, resolved_all)? {
                rows.push(row);
                reliability.extend(rel);
                distribution.push(DistributionRow {
                    model: model.clone(),
                    summary: dist,
                });
                full_models.push(ModelForecasts {
                    model: model.clone(),
                    forecasts: fs,
                });
            }
        }
        if !subset.is_empty() {
            let fs = in_scope(recs, Some(&subset));
            if let Some((row, _, _)) = score_row(ctx, model, SUBQ_SUBSET, &fs, &outcomes, resolved_subset)? {
                rows.push(row);
                subset_models.push(ModelForecasts {
                    model: model.clone(),
                    forecasts: fs,
                });
            }
        }
    }

    let mut ranking = Vec::new();
    let iters = ctx.cfg.score.iterations;
    for (name, models) in [("all_models", &full_models), ("subq_vs_direct", &subset_models)] {
        if models.len() < 2 {
            continue;
        }
        let seed = derive_seed(ctx.cfg.run.seed, &format!("ranking:{name}"));
        match ranking_stability(models, &outcomes, iters, seed) {
            Ok(stability) => ranking.push(RankingRow {
                comparison: name.to_string(),
                stability,
            }),
            Err(e) => tracing::warn!("ranking {name} skipped: {e}"),
        }
    }
    let gt = ground_truth(ctx, &resolutions)?;

    let d_scores = ctx.run.write_jsonl("scores.jsonl", &rows)?;
    let d_rel = ctx.run.write_jsonl("reliability.jsonl", &reliability)?;
    let d_rank = ctx.run.write_jsonl("ranking.jsonl", &ranking)?;
    let d_dist = ctx.run.write_jsonl("distribution.jsonl", &distribution)?;
    let d_gt = ctx.run.write_jsonl("ground_truth.jsonl", &gt)?;
    let summary = StageSummary {
        processed: rows.len(),
        ..Default::default()
    };
    ctx.finish(
        "score",
        &inputs,
        vec![
            ("scores.jsonl", d_scores),
            ("reliability.jsonl", d_rel),
            ("ranking.jsonl", d_rank),
            ("distribution.jsonl", d_dist),
            ("ground_truth.jsonl", d_gt),
        ],
        summary,
    )
}
