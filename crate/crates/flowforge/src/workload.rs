//! The numeric-derivative workload: central differences over a sine grid,
//! split across a configuration-dependent number of worker threads.

use std::thread;
use std::time::Instant;

use flowforge_core::operators::{central_differences_into, sine_grid, OperatorError};
use flowforge_core::optimizer::{ConfigurationPoint, ExecutorError, WorkloadExecutor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadResult {
    pub duration_ms: f64,
    pub checksum: f64,
    pub workers: usize,
}

pub fn available_cores() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// `min(executor_instances · executor_cores, available cores)`; 1 without a config.
pub fn workers_for(config: Option<&ConfigurationPoint>) -> usize {
    let Some(c) = config else { return 1 };
    let instances = c.int("executor_instances").unwrap_or(1).max(1) as usize;
    let cores = c.int("executor_cores").unwrap_or(1).max(1) as usize;
    (instances.saturating_mul(cores)).min(available_cores()).max(1)
}

/// Runs `reps` passes of central differences over `sin(i/n)` on `workers` threads.
/// The checksum is the sum of the final derivatives, summed in index order so it
/// does not depend on the worker count.
pub fn derivative_workload(n: usize, reps: usize, workers: usize) -> Result<WorkloadResult, OperatorError> {
    if n < 3 {
        return Err(OperatorError::InvalidSize(format!("n must be at least 3, got {n}")));
    }
    if reps == 0 {
        return Err(OperatorError::InvalidSize("reps must be at least 1".into()));
    }
    let workers = workers.clamp(1, n - 2);
    let h = 1.0 / n as f64;
    let x = sine_grid(n);
    let mut out = vec![0.0; n - 2];
    let chunk = (n - 2).div_ceil(workers);
    let start = Instant::now();
    for _ in 0..reps {
        thread::scope(|s| {
            for (w, part) in out.chunks_mut(chunk).enumerate() {
                let x = &x;
                s.spawn(move || central_differences_into(x, h, w * chunk, part));
            }
        });
    }
    let duration_ms = start.elapsed().as_secs_f64() * 1000.0;
    Ok(WorkloadResult { duration_ms, checksum: out.iter().sum(), workers })
}

/// Real-timing workload executor for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeExecutor {
    pub n: usize,
    pub reps: usize,
}

impl WorkloadExecutor for DerivativeExecutor {
    fn execute(&self, point: &ConfigurationPoint) -> Result<f64, ExecutorError> {
        derivative_workload(self.n, self.reps, workers_for(Some(point)))
            .map(|r| r.duration_ms.max(1e-3))
            .map_err(|e| ExecutorError(e.to_string()))
    }
}
