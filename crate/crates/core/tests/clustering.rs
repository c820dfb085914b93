use ffoundry_core::cluster::{dbscan, kmeans, normalized, pair_count, sample_pairs, ClusterParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected components of the similarity >= threshold graph, numbered by
/// lowest member index; singletons are noise.
fn components(vectors: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    let unit: Vec<Vec<f64>> = vectors.iter().map(|v| normalized(v)).collect();
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sim: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            if sim >= threshold {
                degree[i] += 1;
                degree[j] += 1;
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = std::collections::HashMap::new();
    (0..n)
        .map(|i| {
            if degree[i] == 0 {
                return None;
            }
            let root = find(&mut parent, i);
            let next = ids.len();
            Some(*ids.entry(root).or_insert(next))
        })
        .collect()
}

/// Points near a handful of directions, so that the threshold graph has
/// non-trivial components.
fn random_instance(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=50);
    let dim = rng.random_range(2..=6);
    let centres: Vec<Vec<f64>> = (0..rng.random_range(1..=5))
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let spread = rng.random_range(0.05..0.6);
    (0..n)
        .map(|_| {
            let c = &centres[rng.random_range(0..centres.len())];
            let v: Vec<f64> = c.iter().map(|x| x + rng.random_range(-spread..spread)).collect();
            normalized(&v)
        })
        .collect()
}

#[test]
fn dbscan_equals_threshold_graph_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ClusterParams::default();
    let mut nontrivial = 0;
    for _ in 0..200 {
        let v = random_instance(&mut rng);
        let got = dbscan(&v, &params).unwrap();
        let want = components(&v, params.similarity_threshold);
        assert_eq!(got, want);
        nontrivial += usize::from(got.iter().any(Option::is_some) && got.iter().any(Option::is_none));
    }
    assert!(nontrivial > 20, "only {nontrivial} mixed instances");
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for i in 0..60 {
        let blob = i % 2;
        let centre = if blob == 0 { [10.0, 0.0, 0.0] } else { [0.0, 10.0, 0.0] };
        points.push(centre.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect::<Vec<f64>>());
        truth.push(blob);
    }
    for seed in 0..10 {
        let r = kmeans(&points, 2, seed, 100).unwrap();
        let first = r.assignments[0];
        for (a, t) in r.assignments.iter().zip(&truth) {
            assert_eq!(*a == first, *t == 0, "seed {seed}");
        }
    }
}

#[test]
fn kmeans_with_k_equal_n_isolates_every_point() {
    let points: Vec<Vec<f64>> = (0..8).map(|i| vec![(i + 1) as f64, (i * i) as f64]).collect();
    let r = kmeans(&points, 8, 3, 50).unwrap();
    let mut seen = r.assignments.clone();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 8);
}

#[test]
fn kmeans_is_deterministic_under_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    assert_eq!(kmeans(&points, 5, 42, 100).unwrap(), kmeans(&points, 5, 42, 100).unwrap());
}

#[test]
fn sampled_pairs_are_distinct_and_proper() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 2..=30 {
        for _ in 0..5 {
            let pairs = sample_pairs(n, 15, &mut rng);
            assert_eq!(pairs.len(), 15.min(pair_count(n)));
            let mut uniq = pairs.clone();
            uniq.dedup();
            assert_eq!(uniq.len(), pairs.len());
            assert!(pairs.iter().all(|(a, b)| a < b && *b < n));
        }
    }
}

#[test]
fn pair_sampling_is_roughly_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 7;
    let mut counts = vec![vec![0usize; n]; n];
    let trials = 20_000;
    for _ in 0..trials {
        for (a, b) in sample_pairs(n, 5, &mut rng) {
            counts[a][b] += 1;
        }
    }
    let expected = trials as f64 * 5.0 / pair_count(n) as f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let rel = (counts[a][b] as f64 - expected).abs() / expected;
            assert!(rel < 0.05, "pair ({a},{b}) count {} vs {expected}", counts[a][b]);
        }
    }
}
