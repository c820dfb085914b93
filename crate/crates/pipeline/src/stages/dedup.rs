//! Embedding, DBSCAN candidate clusters and pairwise duplicate judgement.

use std::collections::{BTreeMap, BTreeSet};

use ffoundry_core::cluster::{dbscan, ClusterParams};
use ffoundry_core::{GateResult, Question};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{decode, encode, is_transient, map_items, write_rejects, Ctx, Outcome, Reject};
use crate::config::Role;
use crate::gateway::AgentRequest;
use crate::parse::parse_categorical;
use crate::prompts::{Artifact, TemplateId};
use crate::rundir::{RunDir, RunError, StageSummary, WorkRecord, WorkStatus};

/// Where one question's vector sits in `embeddings.bin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingIndexEntry {
    pub id: String,
    pub offset: u64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCluster {
    pub cluster_id: usize,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum DedupRow {
    Pair {
        cluster_id: usize,
        a: String,
        b: String,
        /// `None` when the judgement is missing or unreadable.
        duplicate: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transcript_ref: Option<String>,
    },
    Removed {
        id: String,
        kept: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Judgement {
    duplicate: bool,
    transcript_ref: String,
}

/// Encodes vectors as a little-endian `u32` length followed by the `f32` components.
fn encode_embeddings(rows: &[(String, Vec<f32>)]) -> (Vec<u8>, Vec<EmbeddingIndexEntry>) {
    let mut bytes = Vec::new();
    let mut index = Vec::new();
    for (id, v) in rows {
        index.push(EmbeddingIndexEntry {
            id: id.clone(),
            offset: bytes.len() as u64,
            dim: v.len(),
        });
        bytes.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    (bytes, index)
}

/// Reads the vectors written by the dedup stage, keyed by question id.
pub fn read_embeddings(run: &RunDir) -> Result<BTreeMap<String, Vec<f32>>, RunError> {
    let path = run.path("embeddings.bin");
    let bytes = std::fs::read(&path).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    let index: Vec<EmbeddingIndexEntry> = run.read_jsonl("embeddings_index.jsonl")?;
    let mut out = BTreeMap::new();
    for (line, e) in index.into_iter().enumerate() {
        let bad = |message: &str| RunError::Malformed {
            path: path.clone(),
            line: line + 1,
            message: message.to_string(),
        };
        let start = e.offset as usize;
        let len = bytes
            .get(start..start + 4)
            .ok_or_else(|| bad("offset past end of file"))?;
        let dim = u32::from_le_bytes(len.try_into().expect("four bytes")) as usize;
        if dim != e.dim {
            return Err(bad("dimension does not match the index"));
        }
        let body = bytes
            .get(start + 4..start + 4 + 4 * dim)
            .ok_or_else(|| bad("vector runs past end of file"))?;
        let v = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
            .collect();
        out.insert(e.id, v);
    }
    Ok(out)
}

/// Questions that passed the gate, in id order.
pub(crate) fn passed_questions(run: &RunDir) -> Result<Vec<Question>, RunError> {
    let gates: Vec<GateResult> = run.read_jsonl("gate_results.jsonl")?;
    let passed: BTreeSet<String> = gates
        .into_iter()
        .filter(|g| g.passed)
        .map(|g| g.question_id)
        .collect();
    let mut qs: Vec<Question> = run
        .read_jsonl::<Question>("questions.jsonl")?
        .into_iter()
        .filter(|q| passed.contains(&q.id))
        .collect();
    qs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(qs)
}

/// Embeds every question not yet in the log. Returns the vectors in input
/// order (missing where embedding failed or was held back) and the counts.
fn embed_all(ctx: &Ctx<'_>, qs: &[Question], summary: &mut StageSummary) -> Result<Vec<Option<Vec<f32>>>, RunError> {
    let log = ctx.run.work_log("dedup_embed")?;
    let logged = log.load()?;
    let mut out: Vec<Option<Vec<f32>>> = Vec::with_capacity(qs.len());
    let mut todo = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        match logged.get(&q.id) {
            Some(r) if r.status == WorkStatus::Ok => out.push(Some(decode(&r.data)?)),
            _ => {
                out.push(None);
                todo.push(i);
            }
        }
    }
    if let Some(limit) = ctx.opts.limit {
        if todo.len() > limit {
            summary.pending += todo.len() - limit;
            todo.truncate(limit);
        }
    }
    if todo.is_empty() {
        return Ok(out);
    }
    let texts: Vec<String> = todo.iter().map(|&i| qs[i].embedding_text()).collect();
    match ctx
        .gw
        .embed(&ctx.backend(Role::Embedder), &texts, ctx.cfg.dedup.batch_size)
    {
        Ok(vectors) => {
            for (&i, v) in todo.iter().zip(vectors) {
                log.append(&WorkRecord {
                    id: qs[i].id.clone(),
                    status: WorkStatus::Ok,
                    data: encode(&v),
                    error: None,
                })?;
                out[i] = Some(v);
            }
        }
        Err(e) => {
            tracing::warn!("embedding failed: {e}");
            for &i in &todo {
                log.append(&WorkRecord {
                    id: qs[i].id.clone(),
                    status: WorkStatus::Failed,
                    data: Value::Null,
                    error: Some(e.to_string()),
                })?;
            }
            summary.failed += todo.len();
        }
    }
    Ok(out)
}

fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
    let p = parent.get(x).cloned().unwrap_or_else(|| x.to_string());
    if p == x {
        return p;
    }
    let root = find(parent, &p);
    parent.insert(x.to_string(), root.clone());
    root
}

/// Groups confirmed duplicate pairs into components and maps every non-kept
/// member to the smallest id of its component.
pub fn removals(confirmed: &[(String, String)]) -> BTreeMap<String, String> {
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    for (a, b) in confirmed {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let ids: Vec<String> = parent.keys().cloned().collect();
    ids.into_iter()
        .filter_map(|id| {
            let root = find(&mut parent, &id);
            (root != id).then_some((id, root))
        })
        .collect()
}

fn pair_artifacts(a: &Question, b: &Question) -> Vec<Artifact> {
    let mut out = Vec::new();
    for (n, q) in [(1, a), (2, b)] {
        out.push(Artifact::new(format!("Question {n} title"), q.title.clone()));
        out.push(Artifact::new(format!("Question {n} description"), q.background.clone()));
        out.push(Artifact::new(
            format!("Question {n} resolution criteria"),
            q.resolution_criteria.clone(),
        ));
    }
    out
}

pub(super) fn dedup(ctx: &Ctx<'_>) -> Result<StageSummary, RunError> {
    let qs = passed_questions(ctx.run)?;
    let mut summary = StageSummary::default();
    let vectors = embed_all(ctx, &qs, &mut summary)?;

    // Only embedded questions take part; the rest wait for a rerun.
    let embedded: Vec<(usize, Vec<f64>)> = vectors
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.as_ref().map(|v| (i, v.iter().map(|&x| f64::from(x)).collect())))
        .collect();
    let params = ClusterParams {
        similarity_threshold: ctx.cfg.dedup.similarity_threshold,
        min_points: ctx.cfg.dedup.min_points,
    };
    let points: Vec<Vec<f64>> = embedded.iter().map(|(_, v)| v.clone()).collect();
    let labels = if points.is_empty() {
        Vec::new()
    } else {
        dbscan(&points, &params).map_err(|e| RunError::Config(e.to_string()))?
    };
    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for ((i, _), label) in embedded.iter().zip(&labels) {
        if let Some(c) = label {
            clusters.entry(*c).or_default().push(qs[*i].id.clone());
        }
    }
    let clusters: Vec<CandidateCluster> = clusters
        .into_iter()
        .map(|(cluster_id, mut member_ids)| {
            member_ids.sort();
            CandidateCluster { cluster_id, member_ids }
        })
        .collect();

    let by_id: BTreeMap<&str, &Question> = qs.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut items: Vec<(String, (usize, String, String))> = Vec::new();
    for c in &clusters {
        let m = &c.member_ids;
        let mut n = 0;
        'rows: for i in 0..m.len() {
            for j in i + 1..m.len() {
                if n == ctx.cfg.dedup.max_pairs {
                    tracing::warn!(cluster = c.cluster_id, "pair cap {} reached", n);
                    break 'rows;
                }
                items.push((format!("{}|{}", m[i], m[j]), (c.cluster_id, m[i].clone(), m[j].clone())));
                n += 1;
            }
        }
    }
    let backend = ctx.backend(Role::Deduplicator);
    let mapped = map_items(ctx, "dedup", &items, |_, (_, a, b)| {
        let req = AgentRequest::completion(&backend, TemplateId::Deduplication, pair_artifacts(by_id[a.as_str()], by_id[b.as_str()]));
        let out = match ctx.gw.execute(&req) {
            Ok(resp) => match parse_categorical(&resp.fields["duplicate"], &["yes", "no"]) {
                Ok(l) => Outcome::Done {
                    value: Judgement {
                        duplicate: l == "yes",
                        transcript_ref: resp.transcript_ref,
                    },
                },
                Err(e) => Outcome::Rejected { reason: e.to_string() },
            },
            Err(e) if is_transient(&e) => return Err(e.to_string()),
            Err(e) => Outcome::Rejected { reason: e.to_string() },
        };
        Ok(encode(&out))
    })?;
    summary.processed += mapped.summary.processed;
    summary.skipped += mapped.summary.skipped;
    summary.failed += mapped.summary.failed;
    summary.pending += mapped.summary.pending;

    let mut report = Vec::new();
    let mut confirmed = Vec::new();
    let mut rejects = Vec::new();
    for (pid, (cluster_id, a, b)) in &items {
        let (duplicate, transcript_ref) = match mapped.done.get(pid) {
            None => (None, None),
            Some(v) => match decode::<Outcome<Judgement>>(v)? {
                Outcome::Done { value } => (Some(value.duplicate), Some(value.transcript_ref)),
                Outcome::Rejected { reason } | Outcome::Parked { reason } => {
                    summary.rejected += 1;
                    rejects.push(Reject {
                        stage: "dedup".into(),
                        id: pid.clone(),
                        reason,
                    });
                    (None, None)
                }
            },
        };
        if duplicate == Some(true) {
            confirmed.push((a.clone(), b.clone()));
        }
        report.push(DedupRow::Pair {
            cluster_id: *cluster_id,
            a: a.clone(),
            b: b.clone(),
            duplicate,
            transcript_ref,
        });
    }
    let removed = removals(&confirmed);
    for (id, kept) in &removed {
        report.push(DedupRow::Removed {
            id: id.clone(),
            kept: kept.clone(),
        });
    }
    let finals: Vec<&Question> = embedded
        .iter()
        .map(|(i, _)| &qs[*i])
        .filter(|q| !removed.contains_key(&q.id))
        .collect();
    let rows: Vec<(String, Vec<f32>)> = qs
        .iter()
        .zip(&vectors)
        .filter_map(|(q, v)| v.clone().map(|v| (q.id.clone(), v)))
        .collect();
    let (bytes, index) = encode_embeddings(&rows);

    let d_final = ctx.run.write_jsonl("final_questions.jsonl", &finals)?;
    let d_bin = ctx.run.write_bytes("embeddings.bin", &bytes)?;
    let d_idx = ctx.run.write_jsonl("embeddings_index.jsonl", &index)?;
    let d_clu = ctx.run.write_jsonl("clusters.jsonl", &clusters)?;
    let d_rep = ctx.run.write_jsonl("dedup_report.jsonl", &report)?;
    write_rejects(ctx.run, "dedup", rejects)?;
    ctx.finish(
        "dedup",
        &["questions.jsonl", "gate_results.jsonl"],
        vec![
            ("final_questions.jsonl", d_final),
            ("embeddings.bin", d_bin),
            ("embeddings_index.jsonl", d_idx),
            ("clusters.jsonl", d_clu),
            ("dedup_report.jsonl", d_rep),
        ],
        summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_keep_smallest_id() {
        let pairs = vec![
            ("q3".to_string(), "q5".to_string()),
            ("q1".to_string(), "q5".to_string()),
            ("q7".to_string(), "q8".to_string()),
        ];
        let r = removals(&pairs);
        let want: BTreeMap<String, String> = [("q3", "q1"), ("q5", "q1"), ("q8", "q7")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(r, want);
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::open(dir.path()).unwrap();
        let rows = vec![("a".to_string(), vec![1.0f32, -2.5]), ("b".to_string(), vec![0.25f32; 3])];
        let (bytes, index) = encode_embeddings(&rows);
        run.write_bytes("embeddings.bin", &bytes).unwrap();
        run.write_jsonl("embeddings_index.jsonl", &index).unwrap();
        let back = read_embeddings(&run).unwrap();
        assert_eq!(back["a"], rows[0].1);
        assert_eq!(back["b"], rows[1].1);
    }
}
