//! Objectives, trace checks and a separable training set for the tuner.

use flowforge_core::optimizer::{
    exploration_size, ConfigurationPoint, ParamDomain, ParameterSpace, PerformanceSample, Phase, RrsParams, Scale,
    SearchOutcome,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit_space(d: usize) -> ParameterSpace {
    ParameterSpace::new((0..d).map(|i| ParamDomain::float(&format!("x{i}"), 0.0, 1.0, Scale::Linear, 0.5)).collect())
        .unwrap()
}

pub fn sphere(p: &ConfigurationPoint) -> f64 {
    p.normalized.iter().map(|x| (x - 0.3) * (x - 0.3)).sum()
}

pub fn rosenbrock(p: &ConfigurationPoint) -> f64 {
    let (x, y) = (p.normalized[0], p.normalized[1]);
    (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
}

pub fn check_trace(out: &SearchOutcome, params: &RrsParams) {
    assert_eq!(out.trace.len(), params.eval_budget);
    let mut best = f64::INFINITY;
    for (i, e) in out.trace.iter().enumerate() {
        assert!(e.normalized.iter().all(|u| (0.0..=1.0).contains(u)), "entry {i} outside the unit cube");
        best = best.min(e.value);
        assert_eq!(e.best_value, best);
        if i > 0 {
            assert!(e.best_value <= out.trace[i - 1].best_value);
        }
    }
    assert_eq!(out.best_value, best);
    // every explore phase but a budget-truncated last one has exactly n samples
    let n = exploration_size(params.p, params.q);
    let cycles = out.trace.last().unwrap().cycle + 1;
    for c in 0..cycles {
        let explore = out.trace.iter().filter(|e| e.cycle == c && e.phase == Phase::Explore).count();
        let tail = out.trace.iter().filter(|e| e.cycle == c && e.phase == Phase::Exploit).count();
        if c + 1 < cycles || tail > 0 {
            assert_eq!(explore, n, "cycle {c}");
        } else {
            assert!(explore <= n);
        }
    }
}

/// Synthetic labels: metric 100·(0.5 + x0) against a default of 100, so improved ⇔ x0 < 0.5.
pub fn separable(space: &ParameterSpace, n: usize, rng: &mut ChaCha8Rng) -> Vec<PerformanceSample> {
    (0..n)
        .map(|_| {
            let u: Vec<f64> = (0..space.len()).map(|_| rng.random()).collect();
            let p = space.denormalize(&u).unwrap();
            let metric = 100.0 * (0.5 + p.normalized[0]);
            PerformanceSample::label(p, metric, 100.0)
        })
        .collect()
}
