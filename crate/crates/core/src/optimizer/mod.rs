//! Configuration tuning: parameter spaces, random tunings, workload labels,
//! the k-NN performance classifier and recursive random search.

mod rrs;
mod space;
mod surrogate;
mod workload;

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rrs::{exploration_size, random_search, rrs_search, Phase, RrsError, RrsParams, SearchOutcome, TraceEntry};
pub use space::{describe_point, ConfigurationPoint, Domain, ParamDomain, ParameterSpace, Scale, SpaceError};
pub use surrogate::{train_surrogate, PerformanceClassifier, Prediction, SurrogateError, SurrogateModel, TrainingRow};
pub use workload::{
    spark_like_grid, spark_like_space, ExecutorError, PerformanceSample, SimulatedCostSurface, WorkloadExecutor,
    WorkloadRunner,
};

/// `n` independent random tunings, deterministic for a given seed.
pub fn sample_configs(space: &ParameterSpace, n: usize, seed: u64) -> Vec<ConfigurationPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| space.sample(&mut rng)).collect()
}

/// Runs recursive random search against the model's score instead of the workload.
pub fn search_surrogate(
    model: &impl PerformanceClassifier,
    space: &ParameterSpace,
    params: &RrsParams,
) -> Result<SearchOutcome, RrsError> {
    rrs_search(|p| -model.predict(&p.normalized).score(), space, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_seeded() {
        let space = spark_like_space();
        assert!(sample_configs(&space, 0, 1).is_empty());
        assert_eq!(sample_configs(&space, 50, 9), sample_configs(&space, 50, 9));
        assert_ne!(sample_configs(&space, 50, 9), sample_configs(&space, 50, 10));
    }
}
