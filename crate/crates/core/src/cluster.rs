//! Vector similarity, density clustering, k-means and pair sampling.

use num_traits::Float;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("vectors have inconsistent lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vector {0} has a non-finite or zero-norm entry")]
    Degenerate(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Float>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn cosine_similarity<T: Float>(a: &[T], b: &[T]) -> T {
    let d = norm(a) * norm(b);
    if d == T::zero() {
        T::zero()
    } else {
        dot(a, b) / d
    }
}

/// Scales `v` to unit length; zero vectors are returned unchanged.
pub fn normalized<T: Float>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    if n == T::zero() {
        v.to_vec()
    } else {
        v.iter().map(|&x| x / n).collect()
    }
}

fn check_vectors<T: Float>(vectors: &[Vec<T>]) -> Result<(), ClusterError> {
    if let Some(first) = vectors.first() {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != first.len() {
                return Err(ClusterError::LengthMismatch(first.len(), v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) || norm(v) == T::zero() {
                return Err(ClusterError::Degenerate(i));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Two points are neighbours when their cosine similarity is at least this.
    pub similarity_threshold: f64,
    /// Neighbourhood size (self included) needed for a core point.
    pub min_points: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.85,
            min_points: 2,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return Err(ClusterError::InvalidParams(format!(
                "similarity threshold {} outside (0, 1)",
                self.similarity_threshold
            )));
        }
        if self.min_points < 2 {
            return Err(ClusterError::InvalidParams(format!(
                "min_points {} < 2",
                self.min_points
            )));
        }
        Ok(())
    }
}

/// DBSCAN with cosine-similarity neighbourhoods.
///
/// Returns one entry per point: `Some(cluster)` or `None` for noise. Cluster
/// ids are assigned in order of the lowest-index core point, so the output is
/// a pure function of the input order.
pub fn dbscan<T: Float + Send + Sync>(
    vectors: &[Vec<T>],
    params: &ClusterParams,
) -> Result<Vec<Option<usize>>, ClusterError> {
    params.validate()?;
    check_vectors(vectors)?;
    let unit: Vec<Vec<T>> = vectors.iter().map(|v| normalized(v)).collect();
    let threshold = T::from(params.similarity_threshold).expect("threshold representable");
    let neighbours: Vec<Vec<usize>> = (0..unit.len())
        .into_par_iter()
        .map(|i| {
            (0..unit.len())
                .filter(|&j| i == j || dot(&unit[i], &unit[j]) >= threshold)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbours
        .iter()
        .map(|n| n.len() >= params.min_points)
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; unit.len()];
    let mut next = 0usize;
    for start in 0..unit.len() {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[start] = Some(cluster);
        let mut frontier = vec![start];
        while let Some(p) = frontier.pop() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    if is_core[q] {
                        frontier.push(q);
                    }
                }
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    pub iterations: usize,
}

fn sq_dist<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn nearest<T: Float>(v: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(v, &centroids[0]);
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(v, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding.
pub fn kmeans<T: Float + Send + Sync>(
    vectors: &[Vec<T>],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<KMeansResult<T>, ClusterError> {
    check_vectors(vectors)?;
    let n = vectors.len();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidParams(format!("k = {k} with {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &vectors[chosen[0]]).to_f64().unwrap_or(0.0))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    pick = Some(i);
                    break;
                }
                target -= d;
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive mass"))
        } else {
            // Remaining points coincide with centres; take any unchosen one.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (i, v) in vectors.iter().enumerate() {
            let d = sq_dist(v, &vectors[pick]).to_f64().unwrap_or(0.0);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    let mut centroids: Vec<Vec<T>> = chosen.iter().map(|&i| vectors[i].clone()).collect();
    let dim = vectors[0].len();
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iterations.max(1) {
        iterations += 1;
        let next: Vec<usize> = vectors.par_iter().map(|v| nearest(v, &centroids)).collect();
        let changed = next != assignments;
        assignments = next;
        if !changed {
            break;
        }
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(v) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let nc = T::from(counts[c]).expect("count representable");
                centroids[c] = sums[c].iter().map(|&s| s / nc).collect();
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
    })
}

/// Number of unordered pairs among `n` items.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Decodes the `idx`-th unordered pair `(i, j)`, `i < j`, in row-major order.
pub fn pair_at(n: usize, mut idx: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    panic!("pair index out of range");
}

/// Samples `min(m, C(n,2))` distinct unordered pairs uniformly without
/// replacement, returned sorted.
pub fn sample_pairs(n: usize, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let total = pair_count(n);
    let take = m.min(total);
    let mut pairs: Vec<(usize, usize)> = index::sample(rng, total, take)
        .into_iter()
        .map(|i| pair_at(n, i))
        .collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_basis_example() {
        let e1 = vec![1.0f64, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let labels = dbscan(&[e1.clone(), e1, e2], &ClusterParams::default()).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0), None]);
    }

    #[test]
    fn identical_vectors_form_one_cluster() {
        let v = vec![vec![0.3f32, 0.4, 0.5]; 6];
        let labels = dbscan(&v, &ClusterParams::default()).unwrap();
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn threshold_is_inclusive() {
        // cos = 0.85 exactly in f64 up to rounding of the construction.
        let a = vec![1.0f64, 0.0];
        let s = 0.85f64;
        let b = vec![s, (1.0 - s * s).sqrt()];
        let sim = cosine_similarity(&a, &b);
        let params = ClusterParams {
            similarity_threshold: sim,
            min_points: 2,
        };
        assert_eq!(dbscan(&[a, b], &params).unwrap(), vec![Some(0), Some(0)]);
    }

    #[test]
    fn invalid_inputs() {
        let p = ClusterParams::default();
        assert!(dbscan(&[vec![1.0f64, 0.0], vec![1.0]], &p).is_err());
        assert!(dbscan(&[vec![0.0f64, 0.0]], &p).is_err());
        assert!(dbscan(&[vec![f64::NAN, 1.0]], &p).is_err());
        let bad = ClusterParams { similarity_threshold: 1.0, min_points: 2 };
        assert!(dbscan(&[vec![1.0f64]], &bad).is_err());
        let bad = ClusterParams { similarity_threshold: 0.5, min_points: 1 };
        assert!(dbscan(&[vec![1.0f64]], &bad).is_err());
    }

    #[test]
    fn higher_min_points_leaves_pairs_as_noise() {
        let v = vec![vec![1.0f64, 0.0], vec![1.0, 0.01], vec![0.0, 1.0]];
        let p = ClusterParams { similarity_threshold: 0.85, min_points: 3 };
        assert_eq!(dbscan(&v, &p).unwrap(), vec![None, None, None]);
    }

    #[test]
    fn kmeans_with_k_equal_n_isolates_every_point() {
        let v: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64 + 1.0]).collect();
        let r = kmeans(&v, 5, 11, 50).unwrap();
        let mut a = r.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn kmeans_is_deterministic_under_seed() {
        let v: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64 + 0.1, (i % 5) as f64 + 0.2])
            .collect();
        let a = kmeans(&v, 4, 99, 100).unwrap();
        let b = kmeans(&v, 4, 99, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let v = vec![vec![1.0f64], vec![2.0]];
        assert!(kmeans(&v, 0, 1, 10).is_err());
        assert!(kmeans(&v, 3, 1, 10).is_err());
    }

    #[test]
    fn pair_decoding_enumerates_all_pairs() {
        let n = 6;
        let decoded: Vec<_> = (0..pair_count(n)).map(|i| pair_at(n, i)).collect();
        let mut expected = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                expected.push((i, j));
            }
        }
        assert_eq!(decoded, expected);
    }
}
