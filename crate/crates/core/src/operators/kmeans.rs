//! Lloyd's k-means with greedy k-means++ seeding.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::frame::{Field, TableFrame};
use crate::value::{Dtype, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub features: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(features: &[&str], k: usize, seed: u64) -> Self {
        KMeansParams {
            features: features.iter().map(|f| f.to_string()).collect(),
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub k: usize,
    pub feature_names: Vec<String>,
    pub coordinates: Vec<Vec<f64>>,
}

/// Result of clustering raw points.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after the seeding assignment and after every iteration.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansReport {
    pub centroids: Centroids,
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (p, label) in points.iter().zip(labels.iter_mut()) {
        let (j, d) = nearest(p, centroids);
        *label = j;
        wcss += d;
    }
    wcss
}

fn wcss_of(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    let cmp = |a: &&Vec<f64>, b: &&Vec<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
    };
    sorted.sort_by(cmp);
    sorted.dedup_by(|a, b| cmp(a, b).is_eq());
    sorted.len()
}

/// Index `i` with probability proportional to `weights[i]`.
fn sample_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// Greedy k-means++: each new center is the best of `2 + ln k` D²-sampled candidates.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let trials = 2 + libm::log(k as f64) as usize;
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let c = sample_weighted(&closest, total, rng);
            let updated: Vec<f64> =
                points.iter().zip(&closest).map(|(p, &d)| d.min(sq_dist(p, &points[c]))).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, c, updated));
            }
        }
        let (_, c, updated) = best.expect("at least one trial");
        centroids.push(points[c].clone());
        closest = updated;
    }
    centroids
}

/// Means of assigned points; an empty cluster is reseeded at the point farthest
/// from its assigned centroid (each point used at most once).
fn update(points: &[Vec<f64>], labels: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let k = old.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut taken: Vec<usize> = Vec::new();
    for j in 0..k {
        if counts[j] == 0 {
            let far = (0..points.len())
                .filter(|i| !taken.contains(i))
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &old[labels[a]]).total_cmp(&sq_dist(&points[b], &old[labels[b]])).then(b.cmp(&a))
                })
                .expect("k never exceeds the number of points");
            taken.push(far);
            sums[j] = points[far].clone();
        } else {
            for s in sums[j].iter_mut() {
                *s /= counts[j] as f64;
            }
        }
    }
    sums
}

/// Clusters `points` (all of one dimension) into `k` groups.
pub fn fit_kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit, OperatorError> {
    if points.is_empty() {
        return Err(OperatorError::EmptyFrame);
    }
    if k == 0 {
        return Err(OperatorError::InvalidArgument("k must be at least 1".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(OperatorError::InvalidArgument("feature values must be finite".into()));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(OperatorError::KTooLarge { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut wcss_history = vec![assign(points, &centroids, &mut labels)];
    let mut next_labels = labels.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let next = update(points, &labels, &centroids);
        let movement = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| libm::sqrt(sq_dist(a, b)))
            .fold(0.0, f64::max);
        centroids = next;
        wcss_history.push(assign(points, &centroids, &mut next_labels));
        let changed = next_labels != labels;
        core::mem::swap(&mut labels, &mut next_labels);
        if !changed || movement < tol {
            converged = true;
            if changed {
                // Stopped on movement: settle centroids on the final assignment.
                centroids = update(points, &labels, &centroids);
                wcss_history.push(wcss_of(points, &centroids, &labels));
            }
            break;
        }
    }
    Ok(KMeansFit { centroids, labels, wcss_history, iterations, converged })
}

/// Clusters the rows of `frame` on `params.features` and appends an int `cluster` column.
pub fn kmeans(frame: TableFrame, params: &KMeansParams) -> Result<(TableFrame, KMeansReport), OperatorError> {
    if params.features.is_empty() {
        return Err(OperatorError::InvalidArgument("no feature columns".into()));
    }
    let mut indices = Vec::with_capacity(params.features.len());
    for name in &params.features {
        let i = frame.column_index(name).ok_or_else(|| OperatorError::ColumnNotFound(name.clone()))?;
        if !frame.schema()[i].dtype.is_numeric() {
            return Err(OperatorError::NonNumericFeature(name.clone()));
        }
        indices.push(i);
    }
    let points: Vec<Vec<f64>> = frame
        .rows()
        .iter()
        .map(|r| indices.iter().map(|&i| r[i].as_f64().expect("numeric column")).collect())
        .collect();
    let fit = fit_kmeans(&points, params.k, params.seed, params.max_iter, params.tol)?;
    let labels = fit.labels.iter().map(|&l| Value::Int(l as i64)).collect();
    let out = frame.with_column(Field::new("cluster", Dtype::Int), labels)?;
    let report = KMeansReport {
        centroids: Centroids { k: params.k, feature_names: params.features.clone(), coordinates: fit.centroids },
        wcss_history: fit.wcss_history,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    Ok((out, report))
}
