use std::collections::BTreeSet;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricsError, OutcomeSet};

/// Generator for bootstrap iteration `i`. Each iteration owns a ChaCha stream,
/// so parallel and sequential evaluation draw identical resamples.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

fn resample_indices(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..n).map(|_| rng.random_range(0..n)));
}

/// Percentile of sorted data with linear interpolation between order statistics.
pub fn percentile<T: Float>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = T::from(pos - lo as f64).expect("weight representable");
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval<T> {
    pub estimate: T,
    pub lo: T,
    pub hi: T,
    pub mass: f64,
    pub iterations: usize,
}

/// Percentile bootstrap interval for the mean of `values`, in the given order.
pub fn bootstrap_mean_ci<T: Float + Send + Sync>(
    values: &[T],
    iterations: usize,
    mass: f64,
    seed: u64,
) -> Result<BootstrapInterval<T>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if iterations == 0 || !(0.0..1.0).contains(&mass) {
        return Err(MetricsError::Domain(format!(
            "iterations {iterations}, mass {mass}"
        )));
    }
    let n = values.len();
    let nt = T::from(n).expect("length representable");
    let mean = |xs: &mut dyn Iterator<Item = T>| xs.fold(T::zero(), |a, b| a + b) / nt;
    let estimate = mean(&mut values.iter().copied());
    let mut means: Vec<T> = (0..iterations)
        .into_par_iter()
        .map_init(Vec::new, |idx, i| {
            let mut rng = iteration_rng(seed, i);
            resample_indices(&mut rng, n, idx);
            mean(&mut idx.iter().map(|&j| values[j]))
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let tail = (1.0 - mass) / 2.0;
    Ok(BootstrapInterval {
        estimate,
        lo: percentile(&means, tail),
        hi: percentile(&means, 1.0 - tail),
        mass,
        iterations,
    })
}

/// Bootstrap interval over per-question scores. Questions are sorted by id
/// before resampling, so the result does not depend on input order.
pub fn bootstrap_ci<T: Float + Send + Sync>(
    scores: &[(String, T)],
    iterations: usize,
    mass: f64,
    seed: u64,
) -> Result<BootstrapInterval<T>, MetricsError> {
    let mut sorted: Vec<&(String, T)> = scores.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let values: Vec<T> = sorted.into_iter().map(|(_, v)| *v).collect();
    bootstrap_mean_ci(&values, iterations, mass, seed)
}

/// One model's forecasts keyed by question id.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelForecasts {
    pub model: String,
    pub forecasts: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingStability {
    /// Models in stable id order; all matrices below are indexed this way.
    pub models: Vec<String>,
    /// Question ids scored by every model, in canonical order.
    pub question_ids: Vec<String>,
    /// Per-model question counts before intersecting.
    pub answered: Vec<usize>,
    pub point_brier: Vec<f64>,
    pub iterations: usize,
    /// `rank_frequency[m][r]`: fraction of iterations model `m` ranked `r` (0 = best).
    pub rank_frequency: Vec<Vec<f64>>,
    /// `win_fraction[a][b]`: fraction of iterations `a` scored strictly lower than `b`.
    pub win_fraction: Vec<Vec<f64>>,
    /// `tie_fraction[a][b]`: fraction of iterations with equal scores.
    pub tie_fraction: Vec<Vec<f64>>,
}

impl RankingStability {
    pub fn index_of(&self, model: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model)
    }

    /// Questions dropped from at least one model by the intersection rule.
    pub fn shrinkage(&self) -> usize {
        self.answered
            .iter()
            .map(|a| a - self.question_ids.len())
            .max()
            .unwrap_or(0)
    }
}

/// Paired bootstrap over the questions every model answered.
///
/// Each iteration draws one resample of question positions and applies it to
/// every model. Rank ties are broken by model id order.
pub fn ranking_stability(
    models: &[ModelForecasts],
    outcomes: &OutcomeSet,
    iterations: usize,
    seed: u64,
) -> Result<RankingStability, MetricsError> {
    if iterations == 0 {
        return Err(MetricsError::Domain("zero iterations".into()));
    }
    let mut models: Vec<&ModelForecasts> = models.iter().collect();
    models.sort_by(|a, b| a.model.cmp(&b.model));
    if models.windows(2).any(|w| w[0].model == w[1].model) {
        return Err(MetricsError::MisalignedInputs("duplicate model id".into()));
    }
    let mut common: Option<BTreeSet<&str>> = None;
    let mut answered = Vec::with_capacity(models.len());
    for m in &models {
        let ids: BTreeSet<&str> = m
            .forecasts
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| outcomes.get(id).is_some())
            .collect();
        answered.push(ids.len());
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(MetricsError::EmptyIntersection);
    }
    let question_ids: Vec<String> = common.iter().map(|s| s.to_string()).collect();
    let n = question_ids.len();

    // errors[m][i]: squared error of model m on canonical question i.
    let mut errors: Vec<Vec<f64>> = Vec::with_capacity(models.len());
    for m in &models {
        let mut by_id: Vec<(&str, f64)> = m
            .forecasts
            .iter()
            .filter(|(id, _)| common.contains(id.as_str()))
            .map(|(id, p)| (id.as_str(), *p))
            .collect();
        by_id.sort_by(|a, b| a.0.cmp(b.0));
        if by_id.len() != n {
            return Err(MetricsError::MisalignedInputs(format!(
                "duplicate forecasts for model {}",
                m.model
            )));
        }
        errors.push(
            by_id
                .iter()
                .map(|(id, p)| {
                    let o = if outcomes.get(id).expect("in intersection") { 1.0 } else { 0.0 };
                    (p - o) * (p - o)
                })
                .collect(),
        );
    }
    let m = models.len();
    let point_brier = errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / n as f64)
        .collect();

    let per_iter: Vec<Vec<f64>> = (0..iterations)
        .into_par_iter()
        .map_init(Vec::new, |idx, it| {
            let mut rng = iteration_rng(seed, it);
            resample_indices(&mut rng, n, idx);
            errors
                .iter()
                .map(|e| idx.iter().map(|&j| e[j]).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();

    let mut rank_counts = vec![vec![0usize; m]; m];
    let mut wins = vec![vec![0usize; m]; m];
    let mut ties = vec![vec![0usize; m]; m];
    let mut order: Vec<usize> = (0..m).collect();
    for scores in &per_iter {
        order.sort_by(|&a, &b| {
            scores[a]
                .partial_cmp(&scores[b])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        for (rank, &model) in order.iter().enumerate() {
            rank_counts[model][rank] += 1;
        }
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                if scores[a] < scores[b] {
                    wins[a][b] += 1;
                } else if scores[a] == scores[b] {
                    ties[a][b] += 1;
                }
            }
        }
    }
    let frac = |rows: Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        rows.into_iter()
            .map(|r| r.into_iter().map(|c| c as f64 / iterations as f64).collect())
            .collect()
    };
    Ok(RankingStability {
        models: models.iter().map(|m| m.model.clone()).collect(),
        question_ids,
        answered,
        point_brier,
        iterations,
        rank_frequency: frac(rank_counts),
        win_fraction: frac(wins),
        tie_fraction: frac(ties),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_gives_degenerate_interval() {
        let ci = bootstrap_mean_ci(&[0.3f64], 500, 0.95, 7).unwrap();
        assert_eq!((ci.lo, ci.estimate, ci.hi), (0.3, 0.3, 0.3));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let a = bootstrap_mean_ci(&xs, 2000, 0.95, 42).unwrap();
        let b = bootstrap_mean_ci(&xs, 2000, 0.95, 42).unwrap();
        assert_eq!(a.lo.to_bits(), b.lo.to_bits());
        assert_eq!(a.hi.to_bits(), b.hi.to_bits());
        let c = bootstrap_mean_ci(&xs, 2000, 0.95, 43).unwrap();
        assert_ne!(a.lo.to_bits(), c.lo.to_bits());
    }

    #[test]
    fn keyed_bootstrap_ignores_input_order() {
        let mut scores: Vec<(String, f64)> = (0..50)
            .map(|i| (format!("q_{i:03}"), (i % 7) as f64 / 7.0))
            .collect();
        let a = bootstrap_ci(&scores, 1000, 0.95, 3).unwrap();
        scores.reverse();
        let b = bootstrap_ci(&scores, 1000, 0.95, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(percentile(&xs, 0.0), 0.0);
        assert_eq!(percentile(&xs, 1.0), 3.0);
        assert!((percentile(&xs, 0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn identical_models_tie_and_rank_by_id() {
        let mut outcomes = OutcomeSet::new();
        let mut f = Vec::new();
        for i in 0..10 {
            outcomes.insert(format!("q{i}"), i % 3 == 0);
            f.push((format!("q{i}"), 0.3));
        }
        let models = vec![
            ModelForecasts { model: "b".into(), forecasts: f.clone() },
            ModelForecasts { model: "a".into(), forecasts: f },
        ];
        let r = ranking_stability(&models, &outcomes, 200, 1).unwrap();
        assert_eq!(r.models, vec!["a", "b"]);
        assert_eq!(r.rank_frequency[0][0], 1.0);
        assert_eq!(r.win_fraction[0][1], 0.0);
        assert_eq!(r.tie_fraction[0][1], 1.0);
    }

    #[test]
    fn disjoint_models_have_empty_intersection() {
        let mut outcomes = OutcomeSet::new();
        outcomes.insert("q1", true);
        outcomes.insert("q2", false);
        let models = vec![
            ModelForecasts { model: "a".into(), forecasts: vec![("q1".into(), 0.5)] },
            ModelForecasts { model: "b".into(), forecasts: vec![("q2".into(), 0.5)] },
        ];
        assert_eq!(
            ranking_stability(&models, &outcomes, 10, 1).unwrap_err(),
            MetricsError::EmptyIntersection
        );
    }

    #[test]
    fn intersection_shrinkage_is_reported() {
        let mut outcomes = OutcomeSet::new();
        for i in 0..4 {
            outcomes.insert(format!("q{i}"), i % 2 == 0);
        }
        let all: Vec<(String, f64)> = (0..4).map(|i| (format!("q{i}"), 0.5)).collect();
        let models = vec![
            ModelForecasts { model: "a".into(), forecasts: all.clone() },
            ModelForecasts { model: "b".into(), forecasts: all[..3].to_vec() },
        ];
        let r = ranking_stability(&models, &outcomes, 10, 1).unwrap();
        assert_eq!(r.question_ids.len(), 3);
        assert_eq!(r.shrinkage(), 1);
    }
}
