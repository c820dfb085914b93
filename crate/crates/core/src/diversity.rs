//! Topic clusters and the intra-cluster similarity audit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCluster {
    pub cluster_id: usize,
    pub label: String,
    pub member_ids: Vec<String>,
    pub count: usize,
    pub percentage: f64,
}

/// One scored pair; `score` is `None` when the scorer's reply had no usable digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub cluster_id: usize,
    pub a: String,
    pub b: String,
    pub score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAuditSummary {
    pub cluster_id: usize,
    pub label: String,
    pub size: usize,
    pub scored: usize,
    pub unscored: usize,
    /// Absent when no pair was scored.
    pub mean: Option<f64>,
    /// Counts of scores 1, 2, 3 and 4.
    pub histogram: [usize; 4],
}

/// Summarizes the scored pairs of one cluster. Unscored pairs are counted but
/// excluded from the mean.
pub fn summarize_pairs(
    cluster_id: usize,
    label: &str,
    size: usize,
    pairs: &[PairSimilarity],
) -> PairAuditSummary {
    let mut histogram = [0usize; 4];
    let mut unscored = 0;
    for p in pairs {
        match p.score {
            Some(s @ 1..=4) => histogram[usize::from(s) - 1] += 1,
            _ => unscored += 1,
        }
    }
    let scored: usize = histogram.iter().sum();
    let total: usize = histogram.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
    PairAuditSummary {
        cluster_id,
        label: label.to_string(),
        size,
        scored,
        unscored,
        mean: (scored > 0).then(|| total as f64 / scored as f64),
        histogram,
    }
}

/// Overall audit row: sizes summed, histograms summed, mean over all scored pairs.
pub fn aggregate_summaries(summaries: &[PairAuditSummary]) -> PairAuditSummary {
    let mut histogram = [0usize; 4];
    for s in summaries {
        for (h, c) in histogram.iter_mut().zip(s.histogram) {
            *h += c;
        }
    }
    let scored: usize = histogram.iter().sum();
    let total: usize = histogram.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
    PairAuditSummary {
        cluster_id: usize::MAX,
        label: "Overall".into(),
        size: summaries.iter().map(|s| s.size).sum(),
        scored,
        unscored: summaries.iter().map(|s| s.unscored).sum(),
        mean: (scored > 0).then(|| total as f64 / scored as f64),
        histogram,
    }
}

/// Builds labelled clusters from per-point assignments; percentages are of all points.
pub fn topic_clusters(ids: &[String], assignments: &[usize], labels: &[String]) -> Vec<TopicCluster> {
    let k = labels.len();
    let n = ids.len();
    let mut members: Vec<Vec<String>> = vec![Vec::new(); k];
    for (id, &c) in ids.iter().zip(assignments) {
        members[c].push(id.clone());
    }
    members
        .into_iter()
        .enumerate()
        .map(|(c, mut m)| {
            m.sort();
            TopicCluster {
                cluster_id: c,
                label: labels[c].clone(),
                count: m.len(),
                percentage: if n == 0 { 0.0 } else { 100.0 * m.len() as f64 / n as f64 },
                member_ids: m,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(scores: &[Option<u8>]) -> Vec<PairSimilarity> {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| PairSimilarity {
                cluster_id: 0,
                a: format!("a{i}"),
                b: format!("b{i}"),
                score: *s,
            })
            .collect()
    }

    #[test]
    fn unscored_pairs_are_excluded_from_mean() {
        let s = summarize_pairs(0, "x", 10, &pairs(&[Some(1), Some(3), None]));
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.unscored, 1);
        assert_eq!(s.histogram, [1, 0, 1, 0]);
    }

    #[test]
    fn aggregate_is_pair_weighted() {
        let a = summarize_pairs(0, "a", 5, &pairs(&[Some(1); 4]));
        let b = summarize_pairs(1, "b", 5, &pairs(&[Some(2), Some(2)]));
        let all = aggregate_summaries(&[a.clone(), b.clone()]);
        let weighted = (a.mean.unwrap() * 4.0 + b.mean.unwrap() * 2.0) / 6.0;
        assert!((all.mean.unwrap() - weighted).abs() < 1e-15);
        assert_eq!(all.size, 10);
    }

    #[test]
    fn clusters_partition_ids() {
        let ids: Vec<String> = (0..3).map(|i| format!("q{i}")).collect();
        let t = topic_clusters(&ids, &[1, 0, 1], &["x".into(), "y".into()]);
        assert_eq!(t[1].member_ids, vec!["q0", "q2"]);
        let pct: f64 = t.iter().map(|c| c.percentage).sum();
        assert!((pct - 100.0).abs() < 1e-9);
    }
}
