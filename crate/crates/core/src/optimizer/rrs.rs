//! Recursive random search.
//!
//! Alternates two phases over the unit hypercube of a [`ParameterSpace`]:
//!
//! * explore: `n = ⌈ln(1−q) / ln(1−p)⌉` uniform samples, so that with
//!   confidence `q` at least one lands in the best `p` fraction of the space;
//! * exploit: uniform samples in a box of half-width `p^(1/d)/2` around the
//!   explore winner. An improvement re-centres the box, `l` consecutive
//!   failures shrink it by `c`, and once it is narrower than `ρ_min` the search
//!   returns to exploring.
//!
//! The loop runs until the evaluation budget is spent.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{ConfigurationPoint, Domain, ParameterSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrsParams {
    /// Target top fraction of the space.
    pub p: f64,
    /// Confidence of hitting that fraction during exploration.
    pub q: f64,
    /// Shrink factor applied to the exploit box.
    pub shrink: f64,
    /// Consecutive non-improvements before shrinking.
    pub fail_threshold: usize,
    /// Exploitation stops when the half-width drops below this.
    pub min_half_width: f64,
    pub eval_budget: usize,
    pub seed: u64,
}

impl Default for RrsParams {
    fn default() -> Self {
        RrsParams { p: 0.1, q: 0.99, shrink: 0.5, fail_threshold: 8, min_half_width: 0.01, eval_budget: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RrsError {
    #[error("evaluation budget {budget} is below the exploration size {n}")]
    BudgetTooSmall { budget: usize, n: usize },
    #[error("invalid search parameters: {0}")]
    InvalidParams(&'static str),
}

/// Samples needed so that one of them falls in the top `p` fraction with probability `q`.
pub fn exploration_size(p: f64, q: f64) -> usize {
    libm::ceil(libm::log(1.0 - q) / libm::log(1.0 - p)) as usize
}

impl RrsParams {
    pub fn validate(&self) -> Result<usize, RrsError> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.p) {
            return Err(RrsError::InvalidParams("p must be in (0, 1)"));
        }
        if !open_unit(self.q) {
            return Err(RrsError::InvalidParams("q must be in (0, 1)"));
        }
        if !open_unit(self.shrink) {
            return Err(RrsError::InvalidParams("shrink must be in (0, 1)"));
        }
        if self.fail_threshold == 0 {
            return Err(RrsError::InvalidParams("fail_threshold must be at least 1"));
        }
        if !(self.min_half_width > 0.0 && self.min_half_width.is_finite()) {
            return Err(RrsError::InvalidParams("min_half_width must be positive"));
        }
        let n = exploration_size(self.p, self.q);
        if self.eval_budget < n {
            return Err(RrsError::BudgetTooSmall { budget: self.eval_budget, n });
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phase: Phase,
    /// Explore/exploit cycle this evaluation belongs to (0-based).
    pub cycle: usize,
    pub normalized: Vec<f64>,
    pub value: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ConfigurationPoint,
    pub best_value: f64,
    pub exploration_size: usize,
    pub trace: Vec<TraceEntry>,
}

struct Tracker<'a, F> {
    space: &'a ParameterSpace,
    objective: F,
    budget: usize,
    best: Option<(ConfigurationPoint, f64)>,
    trace: Vec<TraceEntry>,
}

impl<F: FnMut(&ConfigurationPoint) -> f64> Tracker<'_, F> {
    fn exhausted(&self) -> bool {
        self.trace.len() >= self.budget
    }

    fn evaluate(&mut self, point: ConfigurationPoint, phase: Phase, cycle: usize) -> f64 {
        let raw = (self.objective)(&point);
        let value = if raw.is_nan() { f64::INFINITY } else { raw };
        let improved = self.best.as_ref().is_none_or(|(_, b)| value < *b);
        if improved {
            self.best = Some((point.clone(), value));
        }
        let best_value = self.best.as_ref().map_or(value, |(_, b)| *b);
        self.trace.push(TraceEntry { phase, cycle, normalized: point.normalized, value, best_value });
        value
    }

    fn finish(self, exploration_size: usize) -> SearchOutcome {
        let (best, best_value) = self.best.expect("budget is at least one evaluation");
        SearchOutcome { best, best_value, exploration_size, trace: self.trace }
    }
}

/// Uniform sample inside the box `center ± half_width` clipped to the unit cube.
/// Discrete dims pick uniformly among values whose coordinate lies in the box,
/// keeping the centre's value when none does.
fn sample_box(
    space: &ParameterSpace,
    center: &ConfigurationPoint,
    half_width: f64,
    rng: &mut ChaCha8Rng,
) -> ConfigurationPoint {
    let mut u = Vec::with_capacity(space.len());
    for (dim, &c) in space.dims().iter().zip(&center.normalized) {
        let lo = (c - half_width).max(0.0);
        let hi = (c + half_width).min(1.0);
        let x = match &dim.domain {
            Domain::IntRange { .. } | Domain::FloatRange { .. } => lo + rng.random::<f64>() * (hi - lo),
            Domain::Categorical { values, .. } => pick_grid(values.len(), lo, hi, c, rng),
            Domain::Boolean { .. } => pick_grid(2, lo, hi, c, rng),
        };
        u.push(x);
    }
    space.denormalize(&u).expect("dimension matches")
}

fn pick_grid(card: usize, lo: f64, hi: f64, center: f64, rng: &mut ChaCha8Rng) -> f64 {
    let step = (card - 1) as f64;
    let inside: Vec<f64> = (0..card).map(|i| i as f64 / step).filter(|&x| x >= lo && x <= hi).collect();
    if inside.is_empty() {
        center
    } else {
        inside[rng.random_range(0..inside.len())]
    }
}

/// Minimizes `objective` over `space` with recursive random search.
pub fn rrs_search(
    objective: impl FnMut(&ConfigurationPoint) -> f64,
    space: &ParameterSpace,
    params: &RrsParams,
) -> Result<SearchOutcome, RrsError> {
    let n = params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial_half_width = libm::pow(params.p, 1.0 / space.len() as f64) / 2.0;
    let mut t = Tracker { space, objective, budget: params.eval_budget, best: None, trace: Vec::new() };

    let mut cycle = 0;
    while !t.exhausted() {
        let mut phase_best: Option<(ConfigurationPoint, f64)> = None;
        for _ in 0..n {
            if t.exhausted() {
                break;
            }
            let x = t.space.sample(&mut rng);
            let v = t.evaluate(x.clone(), Phase::Explore, cycle);
            if phase_best.as_ref().is_none_or(|(_, b)| v < *b) {
                phase_best = Some((x, v));
            }
        }
        let Some((mut center, mut center_value)) = phase_best else { break };

        let mut half_width = initial_half_width;
        let mut failures = 0;
        while half_width >= params.min_half_width && !t.exhausted() {
            let y = sample_box(t.space, &center, half_width, &mut rng);
            let v = t.evaluate(y.clone(), Phase::Exploit, cycle);
            if v < center_value {
                center = y;
                center_value = v;
                failures = 0;
            } else {
                failures += 1;
                if failures >= params.fail_threshold {
                    half_width *= params.shrink;
                    failures = 0;
                }
            }
        }
        cycle += 1;
    }
    Ok(t.finish(n))
}

/// Pure random search baseline with the same budget accounting.
pub fn random_search(
    objective: impl FnMut(&ConfigurationPoint) -> f64,
    space: &ParameterSpace,
    budget: usize,
    seed: u64,
) -> SearchOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker { space, objective, budget: budget.max(1), best: None, trace: Vec::new() };
    while !t.exhausted() {
        let x = t.space.sample(&mut rng);
        t.evaluate(x, Phase::Explore, 0);
    }
    t.finish(budget)
}
