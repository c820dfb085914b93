//! Markdown run report assembled from stage outputs. Statistics that can be
//! recomputed from stored records (resolver agreement, verdict counts) are
//! recomputed rather than trusted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ffoundry_core::diversity::{PairAuditSummary, TopicCluster};
use ffoundry_core::metrics::{resolution_stats, ResolutionStats};
use ffoundry_core::{FinalResolution, GateResult, Rating, ResolutionVote, SubquestionBundle, Verdict, VerdictKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::rundir::{RunDir, RunError};
use crate::stages::dedup::DedupRow;
use crate::stages::score::{DistributionRow, GroundTruthRow, RankingRow, ReliabilityRow, ScoreRow};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub step: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictStat {
    pub kind: String,
    pub label: String,
    pub count: usize,
}

fn optional<T: DeserializeOwned>(run: &RunDir, name: &str) -> Result<Option<Vec<T>>, RunError> {
    if run.exists(name) {
        run.read_jsonl(name).map(Some)
    } else {
        Ok(None)
    }
}

fn count(run: &RunDir, name: &str) -> Result<Option<usize>, RunError> {
    Ok(optional::<Value>(run, name)?.map(|v| v.len()))
}

fn pct(part: usize, whole: usize) -> String {
    if whole == 0 {
        "n/a".into()
    } else {
        format!("{:.1}%", 100.0 * part as f64 / whole as f64)
    }
}

fn rate(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |r| format!("{:.1}%", 100.0 * r))
}

fn opt3(x: Option<f64>) -> String {
    x.map_or("-".into(), |x| format!("{x:.3}"))
}

/// Funnel counts; steps whose file is absent are left out.
pub fn funnel(run: &RunDir) -> Result<Vec<FunnelRow>, RunError> {
    let mut rows = Vec::new();
    for (step, file) in [
        ("seeds", "seeds.jsonl"),
        ("proto_questions", "protos.jsonl"),
        ("refined_questions", "questions.jsonl"),
    ] {
        if let Some(n) = count(run, file)? {
            rows.push(FunnelRow { step: step.into(), count: n });
        }
    }
    if let Some(g) = optional::<GateResult>(run, "gate_results.jsonl")? {
        rows.push(FunnelRow {
            step: "passed_verification".into(),
            count: g.iter().filter(|g| g.passed).count(),
        });
    }
    if let Some(n) = count(run, "final_questions.jsonl")? {
        rows.push(FunnelRow {
            step: "final_questions".into(),
            count: n,
        });
    }
    Ok(rows)
}

fn label_of(r: &Rating) -> String {
    match r {
        Rating::Quality(l) => l.as_str().to_string(),
        Rating::Resolvability(l) => l.as_str().to_string(),
        Rating::Forecast(p) => {
            if *p < ffoundry_core::gate::TRIVIAL_LOW || *p > ffoundry_core::gate::TRIVIAL_HIGH {
                "trivial".into()
            } else {
                "non_trivial".into()
            }
        }
    }
}

pub fn verdict_stats(verdicts: &[Verdict]) -> Vec<VerdictStat> {
    let mut counts: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for v in verdicts {
        let k = VerdictKind::ALL.iter().position(|k| *k == v.kind).expect("known kind");
        *counts.entry((k, label_of(&v.rating))).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((k, label), count)| VerdictStat {
            kind: VerdictKind::ALL[k].as_str().into(),
            label,
            count,
        })
        .collect()
}

/// Writes `report.md` and the recomputed statistics files. Needs a scored run.
pub fn write_report(run: &RunDir, cfg: &Config) -> Result<PathBuf, RunError> {
    let Some(scores) = optional::<ScoreRow>(run, "scores.jsonl")? else {
        return Err(RunError::Incomplete(
            "scores.jsonl is missing; run `ffoundry score` first".into(),
        ));
    };
    let mut md = String::new();
    let w = &mut md;
    writeln!(w, "# Forecasting question run report\n").unwrap();
    writeln!(
        w,
        "Run window {} to {}, seed {}.\n",
        cfg.run.window_start, cfg.run.window_end, cfg.run.seed
    )
    .unwrap();

    let funnel_rows = funnel(run)?;
    writeln!(w, "## Funnel\n\n| Step | Count | Of previous |\n|---|---:|---:|").unwrap();
    let mut prev: Option<usize> = None;
    for r in &funnel_rows {
        let of_prev = prev.map_or("".into(), |p| pct(r.count, p));
        writeln!(w, "| {} | {} | {} |", r.step, r.count, of_prev).unwrap();
        prev = Some(r.count);
    }
    writeln!(w).unwrap();
    run.write_jsonl("funnel.jsonl", &funnel_rows)?;

    writeln!(w, "## Verification\n").unwrap();
    let verdict_rows = match optional::<Verdict>(run, "verdicts.jsonl")? {
        Some(v) => {
            let stats = verdict_stats(&v);
            let gates = optional::<GateResult>(run, "gate_results.jsonl")?.unwrap_or_default();
            let passed = gates.iter().filter(|g| g.passed).count();
            let trivial = gates.iter().filter(|g| g.trivial_flag).count();
            writeln!(
                w,
                "{} questions gated, {} passed ({}), {} flagged as near-certain.\n",
                gates.len(),
                passed,
                pct(passed, gates.len()),
                trivial
            )
            .unwrap();
            writeln!(w, "| Verifier | Label | Count |\n|---|---|---:|").unwrap();
            for s in &stats {
                writeln!(w, "| {} | {} | {} |", s.kind, s.label, s.count).unwrap();
            }
            writeln!(w).unwrap();
            stats
        }
        None => {
            writeln!(w, "Not run.\n").unwrap();
            Vec::new()
        }
    };
    run.write_jsonl("verdict_stats.jsonl", &verdict_rows)?;

    writeln!(w, "## Deduplication\n").unwrap();
    match optional::<DedupRow>(run, "dedup_report.jsonl")? {
        Some(rows) => {
            let (mut judged, mut dup, mut unread, mut removed) = (0, 0, 0, 0);
            for r in &rows {
                match r {
                    DedupRow::Pair { duplicate, .. } => {
                        judged += 1;
                        match duplicate {
                            Some(true) => dup += 1,
                            Some(false) => {}
                            None => unread += 1,
                        }
                    }
                    DedupRow::Removed { .. } => removed += 1,
                }
            }
            writeln!(
                w,
                "{judged} candidate pairs judged, {dup} confirmed duplicates, {unread} without a verdict; {removed} questions removed.\n"
            )
            .unwrap();
        }
        None => writeln!(w, "Not run.\n").unwrap(),
    }

    writeln!(w, "## Resolution\n").unwrap();
    let stats: Option<ResolutionStats> = match (
        optional::<ResolutionVote>(run, "votes.jsonl")?,
        optional::<FinalResolution>(run, "resolutions.jsonl")?,
    ) {
        (Some(votes), Some(res)) => {
            Some(resolution_stats(&votes, &res).map_err(|e| RunError::Stage(format!("resolution records: {e}")))?)
        }
        _ => None,
    };
    match &stats {
        Some(s) => {
            writeln!(w, "| Quantity | Value |\n|---|---:|").unwrap();
            writeln!(w, "| Resolved questions | {} |", s.total).unwrap();
            writeln!(w, "| Yes | {} |", s.yes).unwrap();
            writeln!(w, "| No | {} |", s.no).unwrap();
            writeln!(w, "| Annulled | {} |", s.annulled).unwrap();
            writeln!(w, "| Non-unanimous primaries | {} ({}) |", s.non_unanimous, pct(s.non_unanimous, s.total)).unwrap();
            writeln!(w, "| Disagreement A/B | {} |", s.disagree_a_b).unwrap();
            writeln!(w, "| Disagreement A/C | {} |", s.disagree_a_c).unwrap();
            writeln!(w, "| Disagreement B/C | {} |", s.disagree_b_c).unwrap();
            writeln!(w, "| Tiebreaker calls | {} |", s.tiebreak_calls).unwrap();
            writeln!(
                w,
                "| Tiebreaker agrees with primary majority | {} of {} ({}) |",
                s.tiebreak_agrees_with_majority,
                s.tiebreak_with_majority,
                rate(s.tiebreak_agreement_rate)
            )
            .unwrap();
            writeln!(w, "| Base rate, all resolved | {} |", rate(Some(s.base_rate_all))).unwrap();
            writeln!(w, "| Base rate, excluding annulled | {} |", rate(s.base_rate_resolved)).unwrap();
            writeln!(w).unwrap();
            if !s.annul_votes_by_slot.is_empty() {
                let parts: Vec<String> = s.annul_votes_by_slot.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                writeln!(w, "Annul votes by resolver: {}.\n", parts.join(", ")).unwrap();
            }
        }
        None => writeln!(w, "Not run.\n").unwrap(),
    }
    run.write_jsonl("resolution_stats.jsonl", &stats.iter().collect::<Vec<_>>())?;

    writeln!(w, "## Scores\n").unwrap();
    writeln!(
        w,
        "| Model | Subset | N | Missing | Brier | Interval | Calibration | Refinement | Uncertainty |\n|---|---|---:|---:|---:|---|---:|---:|---:|"
    )
    .unwrap();
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| (&a.subset, a.brier).partial_cmp(&(&b.subset, b.brier)).expect("finite scores"));
    for s in &sorted {
        writeln!(
            w,
            "| {} | {} | {} | {} | {:.3} | [{:.3}, {:.3}] | {:.3} | {:.3} | {:.3} |",
            s.model, s.subset, s.n, s.missing, s.brier, s.ci_lo, s.ci_hi, s.calibration, s.refinement, s.uncertainty
        )
        .unwrap();
    }
    if let Some(s) = sorted.first() {
        writeln!(w, "\nIntervals are {:.0}% percentile bootstrap intervals.", 100.0 * s.mass).unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "## Ranking stability\n").unwrap();
    match optional::<RankingRow>(run, "ranking.jsonl")? {
        Some(rows) if !rows.is_empty() => {
            for r in rows {
                let s = &r.stability;
                writeln!(
                    w,
                    "### {}\n\n{} shared questions, {} bootstrap iterations, {} questions dropped by the intersection.\n",
                    r.comparison,
                    s.question_ids.len(),
                    s.iterations,
                    s.shrinkage()
                )
                .unwrap();
                writeln!(w, "| Model | Brier | Ranked first |\n|---|---:|---:|").unwrap();
                for (i, m) in s.models.iter().enumerate() {
                    writeln!(w, "| {} | {:.3} | {} |", m, s.point_brier[i], rate(Some(s.rank_frequency[i][0]))).unwrap();
                }
                writeln!(w).unwrap();
            }
        }
        _ => writeln!(w, "Fewer than two models were scored.\n").unwrap(),
    }

    writeln!(w, "## Reliability\n").unwrap();
    let rel = optional::<ReliabilityRow>(run, "reliability.jsonl")?.unwrap_or_default();
    let mut by_model: BTreeMap<&str, Vec<&ReliabilityRow>> = BTreeMap::new();
    for r in &rel {
        by_model.entry(&r.model).or_default().push(r);
    }
    for (m, rows) in by_model {
        writeln!(w, "### {m}\n\n| Bin | Count | Mean forecast | Observed |\n|---|---:|---:|---:|").unwrap();
        for r in rows {
            writeln!(
                w,
                "| [{:.2}, {:.2}) | {} | {} | {} |",
                r.lower,
                r.upper,
                r.count,
                opt3(r.mean_forecast),
                opt3(r.observed_frequency)
            )
            .unwrap();
        }
        writeln!(w).unwrap();
    }

    writeln!(w, "## Forecast distributions\n").unwrap();
    for d in optional::<DistributionRow>(run, "distribution.jsonl")?.unwrap_or_default() {
        let s = &d.summary;
        writeln!(
            w,
            "- {}: mean forecast {:.3} (yes outcomes {}, no outcomes {}), base rate {}",
            d.model,
            s.mean_forecast,
            opt3(s.mean_forecast_yes),
            opt3(s.mean_forecast_no),
            rate(Some(s.base_rate))
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "## Subquestions\n").unwrap();
    match optional::<SubquestionBundle>(run, "subq_bundles.jsonl")? {
        Some(b) => {
            let complete = b.iter().filter(|b| b.is_complete()).count();
            let subs: usize = b.iter().map(|b| b.subquestions.len()).sum();
            let warned = b.iter().filter(|b| !b.warnings.is_empty()).count();
            writeln!(
                w,
                "{} parent questions, {} subquestions, {} bundles complete, {} with warnings.\n",
                b.len(),
                subs,
                complete,
                warned
            )
            .unwrap();
        }
        None => writeln!(w, "Not run.\n").unwrap(),
    }

    writeln!(w, "## Topics\n").unwrap();
    match optional::<TopicCluster>(run, "topics.jsonl")? {
        Some(t) => {
            writeln!(w, "| Topic | Questions | Share |\n|---|---:|---:|").unwrap();
            for c in t {
                writeln!(w, "| {} | {} | {:.1}% |", c.label, c.count, c.percentage).unwrap();
            }
            writeln!(w).unwrap();
        }
        None => writeln!(w, "Not run.\n").unwrap(),
    }

    writeln!(w, "## Diversity\n").unwrap();
    match optional::<PairAuditSummary>(run, "audit_summary.jsonl")? {
        Some(rows) => {
            writeln!(w, "| Topic | Size | Scored pairs | Mean similarity | 1 / 2 / 3 / 4 |\n|---|---:|---:|---:|---|").unwrap();
            for r in rows {
                let h = r.histogram;
                writeln!(
                    w,
                    "| {} | {} | {} | {} | {} / {} / {} / {} |",
                    r.label,
                    r.size,
                    r.scored,
                    r.mean.map_or("-".into(), |m| format!("{m:.2}")),
                    h[0],
                    h[1],
                    h[2],
                    h[3]
                )
                .unwrap();
            }
            writeln!(w).unwrap();
        }
        None => writeln!(w, "Not run.\n").unwrap(),
    }

    if let Some(gt) = optional::<GroundTruthRow>(run, "ground_truth.jsonl")? {
        if let Some(g) = gt.first() {
            writeln!(
                w,
                "## Resolver accuracy\n\n{} of {} checked resolutions disagree with the human verdict ({}); {:.0}% credible interval [{:.1}%, {:.1}%].\n",
                g.errors,
                g.checked,
                rate(Some(g.error_rate)),
                100.0 * g.interval.mass,
                100.0 * g.interval.lo,
                100.0 * g.interval.hi
            )
            .unwrap();
        }
    }

    let path = run.path("report.md");
    run.write_bytes("report.md", md.as_bytes())?;
    Ok(path)
}
