//! Performance classifier: k-nearest-neighbour surrogate over normalized configurations.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::workload::PerformanceSample;

const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Weighted fraction of neighbours that beat the default configuration.
    pub p_improved: f64,
    /// Weighted mean improvement ratio of the neighbours.
    pub predicted_ratio: f64,
}

impl Prediction {
    /// Search score: `p_improved · max(predicted_ratio, 0)`. Higher is better.
    pub fn score(&self) -> f64 {
        self.p_improved * self.predicted_ratio.max(0.0)
    }
}

/// Predicts whether (and by how much) a configuration beats the default.
pub trait PerformanceClassifier {
    fn predict(&self, normalized: &[f64]) -> Prediction;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub normalized: Vec<f64>,
    pub improved: bool,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub training: Vec<TrainingRow>,
    pub default_metric_ms: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("need at least {need} training samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("neighbour count k must be at least 1")]
    InvalidK,
}

/// Stores the labeled samples for inverse-distance-weighted k-NN prediction.
pub fn train_surrogate(
    samples: &[PerformanceSample],
    default_metric_ms: f64,
    k: usize,
) -> Result<SurrogateModel, SurrogateError> {
    if k == 0 {
        return Err(SurrogateError::InvalidK);
    }
    if samples.len() < k {
        return Err(SurrogateError::TooFewSamples { have: samples.len(), need: k });
    }
    let training = samples
        .iter()
        .map(|s| TrainingRow { normalized: s.point.normalized.clone(), improved: s.improved, ratio: s.improvement_ratio })
        .collect();
    Ok(SurrogateModel { training, default_metric_ms, k })
}

impl SurrogateModel {
    /// The `k` nearest training rows as `(distance, index)`, ties by index.
    fn neighbours(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut dist: Vec<(f64, usize)> = self
            .training
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.normalized.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (libm::sqrt(d2), i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.truncate(self.k);
        dist
    }
}

impl PerformanceClassifier for SurrogateModel {
    fn predict(&self, normalized: &[f64]) -> Prediction {
        let near = self.neighbours(normalized);
        if let [(_, i)] = near[..] {
            let row = &self.training[i];
            return Prediction { p_improved: if row.improved { 1.0 } else { 0.0 }, predicted_ratio: row.ratio };
        }
        let (mut total, mut improved, mut ratio) = (0.0, 0.0, 0.0);
        for (d, i) in near {
            let w = 1.0 / (EPSILON + d);
            let row = &self.training[i];
            total += w;
            if row.improved {
                improved += w;
            }
            ratio += w * row.ratio;
        }
        Prediction { p_improved: improved / total, predicted_ratio: ratio / total }
    }
}
