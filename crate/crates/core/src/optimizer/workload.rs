//! Workload executors and labeled performance samples.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{ConfigurationPoint, ParamDomain, ParameterSpace, Scale};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("workload execution failed: {0}")]
pub struct ExecutorError(pub String);

/// Runs the workload at a configuration and reports its execution time in ms.
pub trait WorkloadExecutor: Sync {
    fn execute(&self, point: &ConfigurationPoint) -> Result<f64, ExecutorError>;
}

impl<E: WorkloadExecutor + ?Sized> WorkloadExecutor for &E {
    fn execute(&self, point: &ConfigurationPoint) -> Result<f64, ExecutorError> {
        (**self).execute(point)
    }
}

/// One measured configuration, labeled against the default configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSample {
    pub point: ConfigurationPoint,
    pub metric_ms: f64,
    pub improved: bool,
    pub improvement_ratio: f64,
}

impl PerformanceSample {
    pub fn label(point: ConfigurationPoint, metric_ms: f64, default_metric_ms: f64) -> Self {
        PerformanceSample {
            point,
            metric_ms,
            improved: metric_ms < default_metric_ms,
            improvement_ratio: (default_metric_ms - metric_ms) / default_metric_ms,
        }
    }
}

/// Executes configurations and labels them against the default point's metric,
/// which is measured once, first.
pub struct WorkloadRunner<E> {
    executor: E,
    default_point: ConfigurationPoint,
    default_metric_ms: f64,
}

impl<E: WorkloadExecutor> WorkloadRunner<E> {
    pub fn new(executor: E, space: &ParameterSpace) -> Result<Self, ExecutorError> {
        let default_point = space.default_point();
        let default_metric_ms = executor.execute(&default_point)?;
        if !(default_metric_ms.is_finite() && default_metric_ms > 0.0) {
            return Err(ExecutorError(alloc::format!("default metric {default_metric_ms} is not positive")));
        }
        Ok(WorkloadRunner { executor, default_point, default_metric_ms })
    }

    pub fn default_metric_ms(&self) -> f64 {
        self.default_metric_ms
    }

    pub fn default_point(&self) -> &ConfigurationPoint {
        &self.default_point
    }

    pub fn executor(&self) -> &E {
        &self.executor
    }

    pub fn run(&self, point: &ConfigurationPoint) -> Result<PerformanceSample, ExecutorError> {
        let metric = self.executor.execute(point)?;
        Ok(PerformanceSample::label(point.clone(), metric, self.default_metric_ms))
    }
}

/// Spark-like six-dimensional tuning space used by the simulated cost surface.
pub fn spark_like_space() -> ParameterSpace {
    ParameterSpace::new(alloc::vec![
        ParamDomain::int("executor_instances", 1, 16, Scale::Linear, 2),
        ParamDomain::int("executor_cores", 1, 8, Scale::Linear, 1),
        ParamDomain::int("executor_memory_mb", 512, 16384, Scale::Log, 1024),
        ParamDomain::int("shuffle_partitions", 8, 512, Scale::Log, 200),
        ParamDomain::categorical("serializer", &["java", "kryo"], "java"),
        ParamDomain::boolean("compress", false),
    ])
    .expect("static space is valid")
}

/// Closed-form stand-in for a Spark job's execution time over [`spark_like_space`].
///
/// `cost = 50 + 1000 · base · ser · mem · shuf` with
/// `base = 100 / min(instances·cores, 24)`, `ser = 1.25` for java else 1,
/// `mem = 1 + 1.5 · max(0, (2048 − memory)/2048)` and
/// `shuf = 1 + 0.1 · |log2(partitions) − 6| · (0.7 if compress else 1)`.
/// With `sigma > 0` the cost is scaled by `1 + sigma · g`, `g` a standard normal
/// drawn from a generator keyed by the seed and the point itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCostSurface {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SimulatedCostSurface {
    fn default() -> Self {
        SimulatedCostSurface { sigma: 0.0, seed: 0 }
    }
}

impl SimulatedCostSurface {
    pub fn new(sigma: f64, seed: u64) -> Self {
        SimulatedCostSurface { sigma, seed }
    }

    /// Noise-free cost from raw knob values.
    pub fn formula(instances: i64, cores: i64, memory_mb: i64, partitions: i64, kryo: bool, compress: bool) -> f64 {
        let parallelism = (instances * cores).min(24) as f64;
        let base = 100.0 / parallelism;
        let ser = if kryo { 1.0 } else { 1.25 };
        let mem = 1.0 + f64::max(0.0, (2048.0 - memory_mb as f64) / 2048.0) * 1.5;
        let damp = if compress { 0.7 } else { 1.0 };
        let shuf = 1.0 + 0.1 * libm::fabs(libm::log2(partitions as f64) - 6.0) * damp;
        50.0 + 1000.0 * base * ser * mem * shuf
    }

    pub fn cost(&self, point: &ConfigurationPoint) -> Result<f64, ExecutorError> {
        let int = |name: &str| point.int(name).ok_or_else(|| ExecutorError(alloc::format!("missing int `{name}`")));
        let serializer = point.str("serializer").ok_or_else(|| ExecutorError("missing `serializer`".into()))?;
        let compress = point.bool("compress").ok_or_else(|| ExecutorError("missing `compress`".into()))?;
        let base = Self::formula(
            int("executor_instances")?,
            int("executor_cores")?,
            int("executor_memory_mb")?,
            int("shuffle_partitions")?,
            serializer == "kryo",
            compress,
        );
        if self.sigma == 0.0 {
            return Ok(base);
        }
        Ok(base * (1.0 + self.sigma * self.standard_normal(&point.normalized)))
    }

    fn standard_normal(&self, key: &[f64]) -> f64 {
        // FNV-1a over the coordinate bits keeps the noise independent of call order.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for x in key {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let u1: f64 = rand::Rng::random::<f64>(&mut rng).max(f64::MIN_POSITIVE);
        let u2: f64 = rand::Rng::random(&mut rng);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }
}

impl WorkloadExecutor for SimulatedCostSurface {
    fn execute(&self, point: &ConfigurationPoint) -> Result<f64, ExecutorError> {
        self.cost(point)
    }
}

/// Every point of the brute-force grid over [`spark_like_space`]: all instance and
/// core counts, memory in powers of two 512..16384, partitions 8..512, both
/// serializers and both compress settings.
pub fn spark_like_grid() -> Vec<(i64, i64, i64, i64, bool, bool)> {
    let mut grid = Vec::with_capacity(21_504);
    for instances in 1..=16 {
        for cores in 1..=8 {
            for memory in [512, 1024, 2048, 4096, 8192, 16384] {
                for partitions in [8, 16, 32, 64, 128, 256, 512] {
                    for kryo in [false, true] {
                        for compress in [false, true] {
                            grid.push((instances, cores, memory, partitions, kryo, compress));
                        }
                    }
                }
            }
        }
    }
    grid
}
