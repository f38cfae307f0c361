//! Brute-force oracles and data generators for the operators.

use std::collections::HashMap;

use flowforge_core::{Dtype, Field, TableFrame, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn label_frame(labels: &[String]) -> TableFrame {
    TableFrame::new(vec![Field::new("label", Dtype::String)], labels.iter().map(|l| vec![Value::from(l.as_str())]).collect())
        .unwrap()
}

/// Brute force: count with a hash map, sort by (count desc, label asc).
pub fn oracle_indices(labels: &[String]) -> Vec<i64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    labels.iter().map(|l| order.iter().position(|(o, _)| *o == l).unwrap() as i64).collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng) -> Vec<String> {
    let alphabet = rng.random_range(1..40);
    let len = rng.random_range(1..600);
    // squared draw skews frequencies so ties and long tails both occur
    (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            let k = ((u * u) * alphabet as f64) as usize;
            if rng.random_bool(0.1) { format!("L{k}x") } else { format!("L{k}") }
        })
        .collect()
}

/// Four Gaussian blobs (σ = 1) whose centres are 20 apart, ten times a 2σ radius.
pub fn blobs(seed: u64, per_blob: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centers = [(0.0, 0.0), (20.0, 0.0), (0.0, 20.0), (20.0, 20.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB10B);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (mut points, mut truth) = (vec![], vec![]);
    for (b, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            points.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            truth.push(b);
        }
    }
    (points, truth)
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut used: HashMap<usize, usize> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *map.entry(x).or_insert(y) == y && *used.entry(y).or_insert(x) == x)
}
