//! Topic clustering of the final questions and the intra-cluster similarity audit.

use std::collections::BTreeMap;

use ffoundry_core::cluster::{kmeans, normalized, sample_pairs};
use ffoundry_core::diversity::{aggregate_summaries, summarize_pairs, topic_clusters, PairSimilarity};
use ffoundry_core::{ids, Question};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dedup::read_embeddings;
use super::{decode, encode, is_transient, map_items, Ctx};
use crate::config::Role;
use crate::derive_seed;
use crate::gateway::AgentRequest;
use crate::parse::parse_similarity;
use crate::prompts::{Artifact, TemplateId};
use crate::rundir::{RunError, StageSummary};

pub const UNLABELED: &str = "unlabeled";

enum Item {
    Label { titles: Vec<String> },
    Pair { a: usize, b: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Scored {
    score: Option<u8>,
    transcript_ref: String,
}

fn sampled_titles(members: &[&Question], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), n.min(members.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| members[i].title.clone()).collect()
}

pub(super) fn audit(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let qs: Vec<Question> = ctx.run.read_jsonl("final_questions.jsonl")?;
    let vectors = read_embeddings(ctx.run)?;
    let mut points = Vec::with_capacity(qs.len());
    for q in &qs {
        let v = vectors
            .get(&q.id)
            .ok_or_else(|| RunError::Stage(format!("no embedding for {}", q.id)))?;
        points.push(normalized(&v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>()));
    }
    let k = ctx.cfg.audit.k.min(qs.len());
    let assignments = if k == 0 {
        Vec::new()
    } else {
        kmeans(&points, k, derive_seed(ctx.cfg.run.seed, "kmeans"), ctx.cfg.audit.max_iterations)
            .map_err(|e| RunError::Stage(e.to_string()))?
            .assignments
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        members[c].push(i);
    }

    let mut items: Vec<(String, Item)> = Vec::new();
    let mut cluster_pairs: Vec<Vec<String>> = vec![Vec::new(); k];
    for (c, m) in members.iter().enumerate() {
        let refs: Vec<&Question> = m.iter().map(|&i| &qs[i]).collect();
        let member_ids: Vec<&str> = refs.iter().map(|q| q.id.as_str()).collect();
        let titles = sampled_titles(
            &refs,
            ctx.cfg.audit.label_sample,
            derive_seed(ctx.cfg.run.seed, &format!("labels:{c}")),
        );
        // Keyed by membership so a changed cluster is labelled afresh.
        let key = &ids::digest_hex(&member_ids)[..12];
        items.push((format!("label:{c}:{key}"), Item::Label { titles }));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.cfg.run.seed, &format!("pairs:{c}")));
        for (i, j) in sample_pairs(m.len(), ctx.cfg.audit.pairs_per_cluster, &mut rng) {
            let (a, b) = (m[i], m[j]);
            let id = format!("pair:{}|{}", qs[a].id, qs[b].id);
            cluster_pairs[c].push(id.clone());
            items.push((id, Item::Pair { a, b }));
        }
    }

    let labeler = ctx.backend(Role::Labeler);
    let scorer = ctx.backend(Role::SimilarityScorer);
    let text = |q: &Question| format!("{}\n{}", q.title, q.background);
    let mapped = map_items(ctx, "audit", &items, |_, item| match item {
        Item::Label { titles } => {
            let req = AgentRequest::completion(
                &labeler,
                TemplateId::TopicLabel,
                vec![Artifact::new("Member titles", titles.join("\n"))],
            );
            match ctx.gw.execute(&req) {
                Ok(resp) => Ok(encode(&resp.fields["label"].trim().to_string())),
                Err(e) if is_transient(&e) => Err(e.to_string()),
                Err(e) => {
                    tracing::warn!("topic label failed: {e}");
                    Ok(encode(&UNLABELED.to_string()))
                }
            }
        }
        Item::Pair { a, b } => {
            let req = AgentRequest::completion(
                &scorer,
                TemplateId::Similarity,
                vec![
                    Artifact::new("Question A text", text(&qs[*a])),
                    Artifact::new("Question B text", text(&qs[*b])),
                ],
            );
            match ctx.gw.execute(&req) {
                Ok(resp) => Ok(encode(&Scored {
                    score: parse_similarity(&resp.fields["similarity"]),
                    transcript_ref: resp.transcript_ref,
                })),
                Err(e) if is_transient(&e) => Err(e.to_string()),
                Err(e) => {
                    tracing::warn!("similarity scoring failed: {e}");
                    Ok(encode(&Scored {
                        score: None,
                        transcript_ref: String::new(),
                    }))
                }
            }
        }
    })?;

    let mut labels = Vec::with_capacity(k);
    for (id, item) in &items {
        if let Item::Label { .. } = item {
            let label = match mapped.done.get(id) {
                Some(v) => decode::<String>(v)?,
                None => UNLABELED.to_string(),
            };
            labels.push(if label.is_empty() { UNLABELED.to_string() } else { label });
        }
    }
    let ids: Vec<String> = qs.iter().map(|q| q.id.clone()).collect();
    let topics = topic_clusters(&ids, &assignments, &labels);

    let mut pair_rows = Vec::new();
    let mut summaries = Vec::new();
    let by_id: BTreeMap<&str, &Item> = items.iter().map(|(id, it)| (id.as_str(), it)).collect();
    for (c, pair_ids) in cluster_pairs.iter().enumerate() {
        let mut rows = Vec::new();
        for pid in pair_ids {
            let Item::Pair { a, b } = by_id[pid.as_str()] else {
                unreachable!("pair ids map to pair items")
            };
            let score = match mapped.done.get(pid) {
                Some(v) => decode::<Scored>(v)?.score,
                None => None,
            };
            rows.push(PairSimilarity {
                cluster_id: c,
                a: qs[*a].id.clone(),
                b: qs[*b].id.clone(),
                score,
            });
        }
        summaries.push(summarize_pairs(c, &labels[c], members[c].len(), &rows));
        pair_rows.extend(rows);
    }
    if !summaries.is_empty() {
        let overall = aggregate_summaries(&summaries);
        summaries.push(overall);
    }

    let dt = ctx.run.write_jsonl("topics.jsonl", &topics)?;
    let dp = ctx.run.write_jsonl("pair_audit.jsonl", &pair_rows)?;
    let ds = ctx.run.write_jsonl("audit_summary.jsonl", &summaries)?;
    ctx.finish(
        "audit",
        &["final_questions.jsonl", "embeddings.bin"],
        vec![
            ("topics.jsonl", dt),
            ("pair_audit.jsonl", dp),
            ("audit_summary.jsonl", ds),
        ],
        mapped.summary,
    )
}
