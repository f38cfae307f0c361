//! Configuration optimizer jobs: four stages (random tunings, workload
//! executions, performance classifier, recursive random search) running as
//! separate workers that communicate only through `opt.<jobId>.<stage>` topics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use flowforge_core::optimizer::{
    sample_configs, search_surrogate, spark_like_space, train_surrogate, ConfigurationPoint, ParameterSpace,
    PerformanceClassifier, PerformanceSample, RrsError, RrsParams, SimulatedCostSurface, SurrogateModel, TraceEntry,
    WorkloadExecutor, WorkloadRunner,
};
use serde::{Deserialize, Serialize};

use crate::broker::{now_ms, Broker, Subscription};
use crate::workload::{available_cores, DerivativeExecutor};

pub const STAGE_TUNINGS: &str = "random_tunings";
pub const STAGE_EXECUTIONS: &str = "workload_executions";
pub const STAGE_CLASSIFIER: &str = "performance_classifier";
pub const STAGE_SEARCH: &str = "recursive_random_search";

const POLL_TIMEOUT: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutorSpec {
    /// Closed-form cost surface with optional seeded noise.
    Simulated {
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Real timing of the derivative workload.
    Derivative {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_reps")]
        reps: usize,
    },
}

fn default_n() -> usize {
    100_000
}

fn default_reps() -> usize {
    10
}

impl Default for ExecutorSpec {
    fn default() -> Self {
        ExecutorSpec::Simulated { sigma: 0.0, seed: 0 }
    }
}

impl ExecutorSpec {
    fn build(&self) -> Box<dyn WorkloadExecutor + Send> {
        match *self {
            ExecutorSpec::Simulated { sigma, seed } => Box::new(SimulatedCostSurface::new(sigma, seed)),
            ExecutorSpec::Derivative { n, reps } => Box::new(DerivativeExecutor { n, reps }),
        }
    }
}

/// A job submission. Missing fields take their defaults; `rrs.seed` is
/// replaced by the job seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobRequest {
    pub space: ParameterSpace,
    pub executor: ExecutorSpec,
    pub training_n: usize,
    pub k: usize,
    pub rrs: RrsParams,
    pub seed: u64,
    /// Concurrent workload executions in stage 2; defaults to the core count.
    pub parallelism: Option<usize>,
}

impl Default for JobRequest {
    fn default() -> Self {
        JobRequest {
            space: spark_like_space(),
            executor: ExecutorSpec::default(),
            training_n: 200,
            k: 5,
            rrs: RrsParams::default(),
            seed: 0,
            parallelism: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: String,
    pub k: usize,
    pub training_size: usize,
    pub default_metric_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedImprovement {
    pub p_improved: f64,
    pub predicted_ratio: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredImprovement {
    pub metric_ms: f64,
    pub improvement_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub job_id: String,
    pub state: JobState,
    /// Stage currently running, or the stage that failed.
    pub stage: Option<String>,
    pub space: ParameterSpace,
    pub executor: ExecutorSpec,
    pub seed: u64,
    pub training_n: usize,
    pub rrs: RrsParams,
    pub default_metric_ms: Option<f64>,
    pub samples: Vec<PerformanceSample>,
    pub model: Option<ModelInfo>,
    pub exploration_size: Option<usize>,
    pub trace: Vec<TraceEntry>,
    pub recommended: Option<ConfigurationPoint>,
    pub predicted: Option<PredictedImprovement>,
    pub measured: Option<MeasuredImprovement>,
    pub error: Option<String>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("optimizer job `{0}` not found")]
    NotFound(String),
    #[error("invalid job: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rrs(#[from] RrsError),
    #[error("optimizer report io: {0}")]
    Io(#[from] std::io::Error),
}

/// Messages on the optimizer topics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum StageMessage {
    Tuning { index: usize, point: ConfigurationPoint },
    Sample { index: usize, default_metric_ms: f64, sample: PerformanceSample },
    Model { model: SurrogateModel },
    Result { recommended: ConfigurationPoint, predicted: PredictedImprovement, measured: MeasuredImprovement },
    End,
    Error { stage: String, message: String },
}

struct Channel<'a> {
    broker: &'a Broker,
    topic: String,
}

impl Channel<'_> {
    fn send(&self, msg: &StageMessage) {
        let bytes = serde_json::to_vec(msg).expect("stage messages serialize");
        self.broker.publish(&self.topic, bytes).expect("topic names are non-empty");
    }

    fn fail(&self, stage: &str, message: impl ToString) {
        self.send(&StageMessage::Error { stage: stage.to_string(), message: message.to_string() });
    }
}

/// Blocking iterator over a topic's stage messages.
fn next_message(sub: &mut Subscription) -> StageMessage {
    loop {
        let batch = sub.poll(1, POLL_TIMEOUT).expect("max is 1");
        if let Some(m) = batch.first() {
            let _ = sub.commit(m.offset);
            return serde_json::from_slice(&m.payload).unwrap_or_else(|e| StageMessage::Error {
                stage: "broker".into(),
                message: format!("malformed stage message: {e}"),
            });
        }
    }
}

type Shared = Arc<Mutex<OptimizationReport>>;

fn update(report: &Shared, f: impl FnOnce(&mut OptimizationReport)) {
    f(&mut report.lock().unwrap_or_else(|e| e.into_inner()));
}

pub struct OptimizerJobs {
    broker: Arc<Broker>,
    report_dir: Option<PathBuf>,
    jobs: Mutex<BTreeMap<String, Shared>>,
    next_id: AtomicU64,
}

impl OptimizerJobs {
    pub fn new(broker: Arc<Broker>, report_dir: Option<PathBuf>) -> Result<Self, JobError> {
        let mut next = 1;
        if let Some(dir) = &report_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)?.flatten() {
                let name = entry.file_name();
                let id = name.to_str().and_then(|n| n.strip_prefix("opt-")).and_then(|n| n.strip_suffix(".json"));
                if let Some(n) = id.and_then(|n| n.parse::<u64>().ok()) {
                    next = next.max(n + 1);
                }
            }
        }
        Ok(OptimizerJobs { broker, report_dir, jobs: Mutex::default(), next_id: AtomicU64::new(next) })
    }

    fn report_path(&self, job_id: &str) -> Option<PathBuf> {
        self.report_dir.as_ref().map(|d| d.join(format!("{job_id}.json")))
    }

    /// Current report; falls back to a persisted report from an earlier process.
    pub fn get(&self, job_id: &str) -> Result<OptimizationReport, JobError> {
        if let Some(r) = self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(job_id) {
            return Ok(r.lock().unwrap_or_else(|e| e.into_inner()).clone());
        }
        let valid_id = job_id.strip_prefix("opt-").is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
        let path = self.report_path(job_id).filter(|_| valid_id).ok_or_else(|| JobError::NotFound(job_id.into()))?;
        let bytes = std::fs::read(path).map_err(|_| JobError::NotFound(job_id.into()))?;
        serde_json::from_slice(&bytes).map_err(|e| JobError::Invalid(e.to_string()))
    }

    pub fn wait(&self, job_id: &str, timeout: Duration) -> Result<OptimizationReport, JobError> {
        let deadline = Instant::now() + timeout;
        loop {
            let r = self.get(job_id)?;
            if r.state != JobState::Running || Instant::now() >= deadline {
                return Ok(r);
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    /// Validates the request, starts the stage workers and returns the job id.
    pub fn submit(&self, request: JobRequest) -> Result<String, JobError> {
        if request.k == 0 {
            return Err(JobError::Invalid("k must be at least 1".into()));
        }
        if request.parallelism == Some(0) {
            return Err(JobError::Invalid("parallelism must be at least 1".into()));
        }
        let mut rrs = request.rrs.clone();
        rrs.seed = request.seed;
        rrs.validate()?;
        let job_id = format!("opt-{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let report: Shared = Arc::new(Mutex::new(OptimizationReport {
            job_id: job_id.clone(),
            state: JobState::Running,
            stage: Some(STAGE_TUNINGS.into()),
            space: request.space.clone(),
            executor: request.executor,
            seed: request.seed,
            training_n: request.training_n,
            rrs: rrs.clone(),
            default_metric_ms: None,
            samples: Vec::new(),
            model: None,
            exploration_size: None,
            trace: Vec::new(),
            recommended: None,
            predicted: None,
            measured: None,
            error: None,
            started_at: now_ms(),
            finished_at: None,
        }));
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(job_id.clone(), report.clone());
        let topic = |stage: &str| format!("opt.{job_id}.{stage}");
        let topics = [topic("tunings"), topic("samples"), topic("model"), topic("result")];
        let mut subs = Vec::new();
        for (t, stage) in topics.iter().zip([STAGE_EXECUTIONS, STAGE_CLASSIFIER, STAGE_SEARCH, "report"]) {
            subs.push(self.broker.subscribe(t, &format!("{job_id}.{stage}")).expect("fresh group"));
        }
        let job = Job {
            broker: self.broker.clone(),
            request: JobRequest { rrs, ..request },
            topics,
            report,
            report_path: self.report_path(&job_id),
        };
        thread::spawn(move || job.run(subs));
        Ok(job_id)
    }
}

struct Job {
    broker: Arc<Broker>,
    request: JobRequest,
    topics: [String; 4],
    report: Shared,
    report_path: Option<PathBuf>,
}

impl Job {
    fn channel(&self, i: usize) -> Channel<'_> {
        Channel { broker: &self.broker, topic: self.topics[i].clone() }
    }

    fn run(self, subs: Vec<Subscription>) {
        let [tunings_in, samples_in, model_in, mut result_in]: [Subscription; 4] =
            subs.try_into().expect("four subscriptions");
        thread::scope(|s| {
            s.spawn(|| self.random_tunings());
            s.spawn(|| self.workload_executions(tunings_in));
            s.spawn(|| self.performance_classifier(samples_in));
            s.spawn(|| self.recursive_random_search(model_in));
            let outcome = next_message(&mut result_in);
            update(&self.report, |r| {
                match outcome {
                    StageMessage::Result { recommended, predicted, measured } => {
                        r.recommended = Some(recommended);
                        r.predicted = Some(predicted);
                        r.measured = Some(measured);
                        r.state = JobState::Completed;
                        r.stage = None;
                    }
                    StageMessage::Error { stage, message } => {
                        r.error = Some(format!("{stage}: {message}"));
                        r.stage = Some(stage);
                        r.state = JobState::Failed;
                    }
                    other => {
                        r.error = Some(format!("unexpected result message {other:?}"));
                        r.state = JobState::Failed;
                    }
                }
                r.finished_at = Some(now_ms());
                // persisted before the lock is released so a terminal state is never visible without its file
                if let Some(path) = &self.report_path {
                    let text = serde_json::to_vec_pretty(&*r).expect("reports serialize");
                    let _ = write_atomically(path, &text);
                }
            });
        });
    }

    fn random_tunings(&self) {
        let out = self.channel(0);
        for (index, point) in sample_configs(&self.request.space, self.request.training_n, self.request.seed).into_iter().enumerate() {
            out.send(&StageMessage::Tuning { index, point });
        }
        out.send(&StageMessage::End);
    }

    fn workload_executions(&self, mut input: Subscription) {
        let out = self.channel(1);
        update(&self.report, |r| r.stage = Some(STAGE_EXECUTIONS.into()));
        let executor = self.request.executor.build();
        let runner = match WorkloadRunner::new(&*executor, &self.request.space) {
            Ok(r) => r,
            Err(e) => return out.fail(STAGE_EXECUTIONS, e),
        };
        let default_ms = runner.default_metric_ms();
        update(&self.report, |r| r.default_metric_ms = Some(default_ms));
        let workers = self.request.parallelism.unwrap_or_else(available_cores).max(1);
        let (tx, rx) = mpsc::channel::<(usize, ConfigurationPoint)>();
        let rx = Mutex::new(rx);
        let failed = Mutex::new(None::<String>);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let next = rx.lock().unwrap_or_else(|e| e.into_inner()).recv();
                    let Ok((index, point)) = next else { return };
                    if failed.lock().unwrap_or_else(|e| e.into_inner()).is_some() {
                        continue;
                    }
                    match runner.run(&point) {
                        Ok(sample) => out.send(&StageMessage::Sample { index, default_metric_ms: default_ms, sample }),
                        Err(e) => {
                            failed.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e.to_string());
                        }
                    }
                });
            }
            loop {
                match next_message(&mut input) {
                    StageMessage::Tuning { index, point } => tx.send((index, point)).expect("workers alive"),
                    StageMessage::Error { stage, message } => {
                        failed.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(format!("{stage}: {message}"));
                        break;
                    }
                    _ => break,
                }
            }
            drop(tx);
        });
        match failed.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(message) => out.fail(STAGE_EXECUTIONS, message),
            None => out.send(&StageMessage::End),
        }
    }

    fn performance_classifier(&self, mut input: Subscription) {
        let out = self.channel(2);
        let mut samples: Vec<(usize, PerformanceSample)> = Vec::new();
        let mut default_ms = None;
        loop {
            match next_message(&mut input) {
                StageMessage::Sample { index, default_metric_ms, sample } => {
                    default_ms = Some(default_metric_ms);
                    samples.push((index, sample));
                }
                StageMessage::Error { stage, message } => return out.fail(&stage, message),
                _ => break,
            }
        }
        update(&self.report, |r| r.stage = Some(STAGE_CLASSIFIER.into()));
        samples.sort_by_key(|(i, _)| *i);
        let samples: Vec<PerformanceSample> = samples.into_iter().map(|(_, s)| s).collect();
        update(&self.report, |r| r.samples = samples.clone());
        let default_ms = default_ms.or_else(|| self.report.lock().ok().and_then(|r| r.default_metric_ms));
        let Some(default_ms) = default_ms else {
            return out.fail(STAGE_CLASSIFIER, "no default metric");
        };
        match train_surrogate(&samples, default_ms, self.request.k) {
            Ok(model) => {
                update(&self.report, |r| {
                    r.model = Some(ModelInfo {
                        kind: "knn".into(),
                        k: model.k,
                        training_size: model.training.len(),
                        default_metric_ms: default_ms,
                    })
                });
                out.send(&StageMessage::Model { model });
            }
            Err(e) => out.fail(STAGE_CLASSIFIER, e),
        }
    }

    fn recursive_random_search(&self, mut input: Subscription) {
        let out = self.channel(3);
        let model = match next_message(&mut input) {
            StageMessage::Model { model } => model,
            StageMessage::Error { stage, message } => return out.fail(&stage, message),
            other => return out.fail(STAGE_SEARCH, format!("unexpected message {other:?}")),
        };
        update(&self.report, |r| r.stage = Some(STAGE_SEARCH.into()));
        let outcome = match search_surrogate(&model, &self.request.space, &self.request.rrs) {
            Ok(o) => o,
            Err(e) => return out.fail(STAGE_SEARCH, e),
        };
        update(&self.report, |r| {
            r.trace = outcome.trace.clone();
            r.exploration_size = Some(outcome.exploration_size);
        });
        let p = model.predict(&outcome.best.normalized);
        let predicted = PredictedImprovement { score: p.score(), p_improved: p.p_improved, predicted_ratio: p.predicted_ratio };
        // one real execution validates the recommendation
        let metric_ms = match self.request.executor.build().execute(&outcome.best) {
            Ok(m) => m,
            Err(e) => return out.fail(STAGE_SEARCH, e),
        };
        let measured = MeasuredImprovement {
            metric_ms,
            improvement_ratio: (model.default_metric_ms - metric_ms) / model.default_metric_ms,
        };
        out.send(&StageMessage::Result { recommended: outcome.best, predicted, measured });
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
