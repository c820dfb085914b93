//! Stratified ordering of candidate articles across event types and geographies.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub url: String,
    pub title: String,
    pub event_type: String,
    pub geography: String,
}

fn round_robin<T>(mut queues: Vec<Vec<T>>) -> Vec<T> {
    for q in &mut queues {
        q.reverse();
    }
    let mut out = Vec::new();
    loop {
        let mut any = false;
        for q in &mut queues {
            if let Some(x) = q.pop() {
                out.push(x);
                any = true;
            }
        }
        if !any {
            return out;
        }
    }
}

/// Orders candidates so that every prefix is spread as evenly as supply
/// allows: round-robin over event types, and within each type round-robin
/// over geographies. Buckets are shuffled with a generator seeded from
/// `seed` and the bucket key, and duplicate URLs keep their first occurrence.
pub fn stratified_order(candidates: Vec<Candidate>, seed: u64) -> Vec<Candidate> {
    let mut seen = std::collections::HashSet::new();
    let mut by_type: BTreeMap<String, BTreeMap<String, Vec<Candidate>>> = BTreeMap::new();
    for c in candidates {
        if !seen.insert(c.url.clone()) {
            continue;
        }
        by_type
            .entry(c.event_type.clone())
            .or_default()
            .entry(c.geography.clone())
            .or_default()
            .push(c);
    }
    let per_type: Vec<Vec<Candidate>> = by_type
        .into_iter()
        .map(|(et, geos)| {
            let buckets: Vec<Vec<Candidate>> = geos
                .into_iter()
                .map(|(geo, mut v)| {
                    v.sort_by(|a, b| a.url.cmp(&b.url));
                    let key = ffoundry_core::ids::digest_hex(&[&seed.to_string(), &et, &geo]);
                    let s = u64::from_str_radix(&key[..16], 16).expect("hex digest");
                    v.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                    v
                })
                .collect();
            round_robin(buckets)
        })
        .collect();
    round_robin(per_type)
}
