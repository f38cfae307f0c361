//! Workflow execution: continuous stream deployments over broker topics and
//! run-to-completion batch DAGs, with run records, metrics and a journal of
//! every state transition.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use flowforge_core::dsl::{ValidatedWorkflow, WorkflowMode};
use flowforge_core::optimizer::ConfigurationPoint;
use flowforge_core::TableFrame;
use serde::{Deserialize, Serialize};

use crate::broker::{now_ms, Broker, Subscription};
use crate::envelope::{self, Payload};
use crate::runtime::{instantiate, Conservation, InitError, Operator, OperatorContext, Produced, RuntimeError};
use crate::table_store::TableStore;

const POLL_BATCH: usize = 16;
const POLL_TIMEOUT: Duration = Duration::from_millis(50);
const UNDEPLOY_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Deploying,
    Running,
    Completed,
    Failed,
    Undeployed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Completed | RunState::Failed | RunState::Undeployed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Deploying => "deploying",
            RunState::Running => "running",
            RunState::Completed => "completed",
            RunState::Failed => "failed",
            RunState::Undeployed => "undeployed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Running,
    Succeeded,
    Failed,
}

impl NodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Pending => "pending",
            NodeState::Running => "running",
            NodeState::Succeeded => "succeeded",
            NodeState::Failed => "failed",
        }
    }
}

/// Whether `from → to` is a legal run transition in `mode`.
pub fn legal_run_transition(mode: WorkflowMode, from: RunState, to: RunState) -> bool {
    use RunState::*;
    match mode {
        WorkflowMode::Stream => {
            matches!((from, to), (Deploying, Running | Failed | Undeployed) | (Running, Undeployed | Failed))
        }
        WorkflowMode::Batch => matches!((from, to), (Deploying, Running | Failed) | (Running, Completed | Failed)),
    }
}

pub fn legal_node_transition(from: NodeState, to: NodeState) -> bool {
    use NodeState::*;
    matches!((from, to), (Pending, Running) | (Running, Succeeded | Failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow_name: String,
    pub mode: WorkflowMode,
    pub state: RunState,
    pub node_states: BTreeMap<String, NodeState>,
    pub started_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_config: Option<ConfigurationPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub records_in: u64,
    pub records_out: u64,
    pub execution_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub execution_time_ms: f64,
    pub nodes: BTreeMap<String, NodeMetrics>,
}

/// One line of the run journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    Created {
        run: RunRecord,
    },
    RunState {
        run_id: String,
        from: RunState,
        to: RunState,
        at_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    NodeState {
        run_id: String,
        node: String,
        from: NodeState,
        to: NodeState,
        at_ms: u64,
    },
    Metrics {
        metrics: RunMetrics,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("run `{0}` not found")]
    NotFound(String),
    #[error("run `{0}` is not running")]
    NotRunning(String),
    #[error("workflow `{0}` is already deployed")]
    AlreadyDeployed(String),
    #[error("expected a {expected} workflow, got {actual}")]
    WrongMode { expected: WorkflowMode, actual: WorkflowMode },
    #[error(transparent)]
    OperatorInit(#[from] InitError),
    #[error("run journal {path} line {line}: {reason}")]
    Journal { path: String, line: usize, reason: String },
    #[error("run journal io: {0}")]
    Io(#[from] std::io::Error),
}

struct Run {
    record: RunRecord,
    nodes: BTreeMap<String, NodeMetrics>,
    conservation: BTreeMap<String, Conservation>,
    clock: Option<Instant>,
    /// Metrics captured when the run reached a terminal state.
    frozen: Option<RunMetrics>,
    workers: Vec<thread::JoinHandle<()>>,
}

impl Run {
    fn metrics(&self) -> RunMetrics {
        if let Some(m) = &self.frozen {
            return m.clone();
        }
        let now = now_ms();
        let mut nodes = self.nodes.clone();
        for m in nodes.values_mut() {
            if let (Some(s), None) = (m.started_at_ms, m.finished_at_ms) {
                m.execution_time_ms = now.saturating_sub(s) as f64;
            }
        }
        let total = self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64() * 1000.0);
        let max_node = nodes.values().map(|m| m.execution_time_ms).fold(0.0, f64::max);
        RunMetrics { run_id: self.record.run_id.clone(), execution_time_ms: total.max(max_node), nodes }
    }
}

struct RunCell {
    run: Mutex<Run>,
    stop: AtomicBool,
    /// Workers still alive, signalled as they exit.
    alive: Mutex<usize>,
    exited: Condvar,
}

impl RunCell {
    fn lock(&self) -> MutexGuard<'_, Run> {
        self.run.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn worker_exited(&self) {
        let mut alive = self.alive.lock().unwrap_or_else(|e| e.into_inner());
        *alive = alive.saturating_sub(1);
        self.exited.notify_all();
    }
}

struct Core {
    broker: Arc<Broker>,
    tables: Arc<TableStore>,
    runs: Mutex<BTreeMap<String, Arc<RunCell>>>,
    journal: Option<Mutex<File>>,
    events: Mutex<Vec<RunEvent>>,
}

impl Core {
    fn record(&self, event: RunEvent) {
        if let Some(file) = &self.journal {
            let mut line = serde_json::to_vec(&event).expect("events serialize");
            line.push(b'\n');
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            // journal failures must not take down running workers
            let _ = f.write_all(&line);
        }
        self.events.lock().unwrap_or_else(|e| e.into_inner()).push(event);
    }

    fn cell(&self, run_id: &str) -> Result<Arc<RunCell>, ExecError> {
        self.runs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(run_id)
            .cloned()
            .ok_or_else(|| ExecError::NotFound(run_id.to_string()))
    }

    /// Applies a run transition if legal; returns whether it happened.
    fn set_run_state(&self, cell: &RunCell, to: RunState, error: Option<String>) -> bool {
        let mut run = cell.lock();
        let from = run.record.state;
        if !legal_run_transition(run.record.mode, from, to) {
            return false;
        }
        let at_ms = now_ms();
        run.record.state = to;
        if error.is_some() {
            run.record.error = error.clone();
        }
        let mut frozen = None;
        if to.is_terminal() {
            run.record.finished_at = Some(at_ms.max(run.record.started_at));
            let m = run.metrics();
            run.frozen = Some(m.clone());
            frozen = Some(m);
        }
        let run_id = run.record.run_id.clone();
        self.record(RunEvent::RunState { run_id, from, to, at_ms, error });
        if let Some(metrics) = frozen {
            self.record(RunEvent::Metrics { metrics });
        }
        true
    }

    fn set_node_state(&self, cell: &RunCell, node: &str, to: NodeState) -> bool {
        let mut run = cell.lock();
        let Some(&from) = run.record.node_states.get(node) else { return false };
        if !legal_node_transition(from, to) || run.frozen.is_some() {
            return false;
        }
        let at_ms = now_ms();
        run.record.node_states.insert(node.to_string(), to);
        let m = run.nodes.entry(node.to_string()).or_default();
        match to {
            NodeState::Running => m.started_at_ms = Some(at_ms),
            NodeState::Succeeded | NodeState::Failed => {
                m.finished_at_ms = Some(at_ms);
                m.execution_time_ms = at_ms.saturating_sub(m.started_at_ms.unwrap_or(at_ms)) as f64;
            }
            NodeState::Pending => {}
        }
        let run_id = run.record.run_id.clone();
        self.record(RunEvent::NodeState { run_id, node: node.to_string(), from, to, at_ms });
        true
    }

    fn count(&self, cell: &RunCell, node: &str, records_in: usize, records_out: usize) {
        let mut run = cell.lock();
        if run.frozen.is_some() {
            return;
        }
        let m = run.nodes.entry(node.to_string()).or_default();
        m.records_in += records_in as u64;
        m.records_out += records_out as u64;
    }

    fn fail(&self, cell: &RunCell, node: &str, err: &RuntimeError) {
        self.set_node_state(cell, node, NodeState::Failed);
        cell.stop.store(true, Ordering::SeqCst);
        self.set_run_state(cell, RunState::Failed, Some(format!("node `{node}`: {err}")));
    }
}

/// Topic carrying frames from `from` to `to` in workflow `name`.
pub fn stream_topic(name: &str, from: &str, to: &str) -> String {
    format!("wf.{name}.{from}-{to}")
}

pub struct Executor {
    core: Arc<Core>,
    next_id: AtomicU64,
    journal_path: Option<PathBuf>,
}

impl Executor {
    pub fn new(broker: Arc<Broker>, tables: Arc<TableStore>) -> Self {
        let core = Core {
            broker,
            tables,
            runs: Mutex::default(),
            journal: None,
            events: Mutex::default(),
        };
        Executor { core: Arc::new(core), next_id: AtomicU64::new(1), journal_path: None }
    }

    /// Opens with a run journal, replaying it. Runs that were not terminal when
    /// the journal ended are marked failed.
    pub fn open(broker: Arc<Broker>, tables: Arc<TableStore>, journal: &Path) -> Result<Self, ExecError> {
        let (records, frozen) = replay(journal)?;
        let file = OpenOptions::new().create(true).append(true).open(journal)?;
        let mut exec = Executor::new(broker, tables);
        Arc::get_mut(&mut exec.core).expect("fresh core").journal = Some(Mutex::new(file));
        exec.journal_path = Some(journal.to_path_buf());
        let mut max_id = 0;
        for record in records {
            if let Some(n) = record.run_id.strip_prefix("run-").and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            let metrics = frozen.get(&record.run_id).cloned();
            let nodes = metrics.as_ref().map(|m| m.nodes.clone()).unwrap_or_default();
            let cell = Arc::new(RunCell {
                run: Mutex::new(Run {
                    nodes,
                    conservation: BTreeMap::new(),
                    clock: None,
                    frozen: metrics,
                    workers: Vec::new(),
                    record: record.clone(),
                }),
                stop: AtomicBool::new(true),
                alive: Mutex::new(0),
                exited: Condvar::new(),
            });
            exec.core.runs.lock().unwrap_or_else(|e| e.into_inner()).insert(record.run_id.clone(), cell.clone());
            if !record.state.is_terminal() {
                exec.core.set_run_state(&cell, RunState::Failed, Some("interrupted by restart".into()));
            }
        }
        exec.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(exec)
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal_path.as_deref()
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.core.broker
    }

    pub fn tables(&self) -> &Arc<TableStore> {
        &self.core.tables
    }

    /// Every state transition recorded since this executor was created.
    pub fn events(&self) -> Vec<RunEvent> {
        self.core.events.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunRecord, ExecError> {
        Ok(self.core.cell(run_id)?.lock().record.clone())
    }

    pub fn get_metrics(&self, run_id: &str) -> Result<RunMetrics, ExecError> {
        Ok(self.core.cell(run_id)?.lock().metrics())
    }

    /// Declared record-count relation of each node of a run started by this executor.
    pub fn conservation(&self, run_id: &str) -> Result<BTreeMap<String, Conservation>, ExecError> {
        Ok(self.core.cell(run_id)?.lock().conservation.clone())
    }

    pub fn list_runs(&self) -> Vec<RunRecord> {
        let cells: Vec<Arc<RunCell>> = self.core.runs.lock().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        cells.iter().map(|c| c.lock().record.clone()).collect()
    }

    /// The non-terminal run of workflow `name`, if any.
    pub fn active_run(&self, name: &str) -> Option<RunRecord> {
        self.list_runs().into_iter().find(|r| r.workflow_name == name && !r.state.is_terminal())
    }

    /// Blocks until the run is terminal or `timeout` passes; returns the latest record.
    pub fn wait_run(&self, run_id: &str, timeout: Duration) -> Result<RunRecord, ExecError> {
        let deadline = Instant::now() + timeout;
        loop {
            let record = self.get_run(run_id)?;
            if record.state.is_terminal() || Instant::now() >= deadline {
                return Ok(record);
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    fn instantiate_all(
        &self,
        vw: &ValidatedWorkflow,
        config: Option<&ConfigurationPoint>,
    ) -> Result<Vec<(String, Box<dyn Operator>)>, ExecError> {
        let mut ops = Vec::with_capacity(vw.definition.nodes.len());
        for node in &vw.definition.nodes {
            let ctx = OperatorContext {
                node_id: &node.id,
                bindings: vw.node_bindings(&node.id),
                tables: &self.core.tables,
                config,
            };
            ops.push((node.id.clone(), instantiate(vw.descriptor(&node.id), &ctx)?));
        }
        Ok(ops)
    }

    fn create_run(
        &self,
        vw: &ValidatedWorkflow,
        config: Option<ConfigurationPoint>,
        ops: &[(String, Box<dyn Operator>)],
    ) -> Arc<RunCell> {
        let run_id = format!("run-{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let node_states = ops.iter().map(|(id, _)| (id.clone(), NodeState::Pending)).collect();
        let record = RunRecord {
            run_id: run_id.clone(),
            workflow_name: vw.name().to_string(),
            mode: vw.mode(),
            state: RunState::Deploying,
            node_states,
            started_at: now_ms(),
            finished_at: None,
            deployment_config: config,
            error: None,
        };
        let cell = Arc::new(RunCell {
            run: Mutex::new(Run {
                nodes: ops.iter().map(|(id, _)| (id.clone(), NodeMetrics::default())).collect(),
                conservation: ops.iter().map(|(id, op)| (id.clone(), op.conservation())).collect(),
                clock: Some(Instant::now()),
                frozen: None,
                workers: Vec::new(),
                record: record.clone(),
            }),
            stop: AtomicBool::new(false),
            alive: Mutex::new(0),
            exited: Condvar::new(),
        });
        self.core.runs.lock().unwrap_or_else(|e| e.into_inner()).insert(run_id, cell.clone());
        self.core.record(RunEvent::Created { run: record });
        cell
    }

    /// Starts one worker per node, wired through fresh `wf.<name>.<from>-<to>` topics.
    pub fn deploy_stream(&self, vw: &ValidatedWorkflow, config: Option<ConfigurationPoint>) -> Result<String, ExecError> {
        if vw.mode() != WorkflowMode::Stream {
            return Err(ExecError::WrongMode { expected: WorkflowMode::Stream, actual: vw.mode() });
        }
        if self.active_run(vw.name()).is_some() {
            return Err(ExecError::AlreadyDeployed(vw.name().to_string()));
        }
        let ops = self.instantiate_all(vw, config.as_ref())?;
        let cell = self.create_run(vw, config, &ops);
        let run_id = cell.lock().record.run_id.clone();
        let name = vw.name();
        let ids: Vec<String> = ops.iter().map(|(id, _)| id.clone()).collect();
        for pair in ids.windows(2) {
            self.core.broker.delete_topic(&stream_topic(name, &pair[0], &pair[1]));
        }
        let mut subs: Vec<Option<Subscription>> = vec![None];
        for pair in ids.windows(2) {
            let topic = stream_topic(name, &pair[0], &pair[1]);
            let sub = self.core.broker.subscribe(&topic, &format!("{run_id}.{}", pair[1])).expect("fresh group");
            subs.push(Some(sub));
        }
        *cell.alive.lock().unwrap_or_else(|e| e.into_inner()) = ops.len();
        let mut handles = Vec::with_capacity(ops.len());
        for (i, ((node, op), sub)) in ops.into_iter().zip(subs).enumerate() {
            let output = ids.get(i + 1).map(|next| stream_topic(name, &node, next));
            let core = self.core.clone();
            let cell = cell.clone();
            self.core.set_node_state(&cell, &node, NodeState::Running);
            handles.push(thread::spawn(move || {
                match sub {
                    None => source_worker(&core, &cell, &node, op, output.as_deref()),
                    Some(sub) => stream_worker(&core, &cell, &node, op, sub, output.as_deref()),
                }
                cell.worker_exited();
            }));
        }
        cell.lock().workers = handles;
        self.core.set_run_state(&cell, RunState::Running, None);
        Ok(run_id)
    }

    /// Stops a stream run's workers, waiting up to 5 s for them to drain.
    pub fn undeploy(&self, run_id: &str) -> Result<RunRecord, ExecError> {
        let cell = self.core.cell(run_id)?;
        {
            let run = cell.lock();
            if run.record.mode != WorkflowMode::Stream
                || !matches!(run.record.state, RunState::Deploying | RunState::Running)
            {
                return Err(ExecError::NotRunning(run_id.to_string()));
            }
        }
        cell.stop.store(true, Ordering::SeqCst);
        let deadline = Instant::now() + UNDEPLOY_GRACE;
        let mut alive = cell.alive.lock().unwrap_or_else(|e| e.into_inner());
        while *alive > 0 {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            alive = cell.exited.wait_timeout(alive, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        let finished = *alive == 0;
        drop(alive);
        let workers = std::mem::take(&mut cell.lock().workers);
        if finished {
            for w in workers {
                let _ = w.join();
            }
        }
        if !self.core.set_run_state(&cell, RunState::Undeployed, None) {
            // a worker failed the run while we were stopping it
            return Err(ExecError::NotRunning(run_id.to_string()));
        }
        self.get_run(run_id)
    }

    /// Runs a batch DAG in the background; nodes start as soon as all their
    /// predecessors succeed, so parallel branches overlap.
    pub fn launch_task(&self, vw: &ValidatedWorkflow, config: Option<ConfigurationPoint>) -> Result<String, ExecError> {
        if vw.mode() != WorkflowMode::Batch {
            return Err(ExecError::WrongMode { expected: WorkflowMode::Batch, actual: vw.mode() });
        }
        let ops = self.instantiate_all(vw, config.as_ref())?;
        let cell = self.create_run(vw, config, &ops);
        let run_id = cell.lock().record.run_id.clone();
        let def = vw.definition.clone();
        let core = self.core.clone();
        *cell.alive.lock().unwrap_or_else(|e| e.into_inner()) = 1;
        let coordinator = {
            let cell = cell.clone();
            thread::spawn(move || {
                core.set_run_state(&cell, RunState::Running, None);
                coordinate_batch(&core, &cell, &def, ops);
                cell.worker_exited();
            })
        };
        cell.lock().workers.push(coordinator);
        Ok(run_id)
    }
}

fn publish(core: &Core, topic: Option<&str>, payload: &Payload) {
    if let Some(t) = topic {
        core.broker.publish(t, envelope::encode(payload)).expect("topic names are non-empty");
    }
}

fn source_worker(core: &Core, cell: &RunCell, node: &str, mut op: Box<dyn Operator>, output: Option<&str>) {
    while !cell.stop.load(Ordering::SeqCst) {
        match op.produce() {
            Ok(Produced::Batch(frame)) => {
                let n = frame.num_rows();
                publish(core, output, &Payload::Frame(frame));
                core.count(cell, node, 0, n);
            }
            Ok(Produced::Idle) => {}
            Ok(Produced::End) => {
                publish(core, output, &Payload::EndOfStream);
                core.set_node_state(cell, node, NodeState::Succeeded);
                return;
            }
            Err(e) => return core.fail(cell, node, &e),
        }
    }
}

fn stream_worker(
    core: &Core,
    cell: &RunCell,
    node: &str,
    mut op: Box<dyn Operator>,
    mut sub: Subscription,
    output: Option<&str>,
) {
    let emit = |frames: Vec<TableFrame>| -> usize {
        let mut n = 0;
        for f in frames {
            n += f.num_rows();
            publish(core, output, &Payload::Frame(f));
        }
        n
    };
    while !cell.stop.load(Ordering::SeqCst) {
        let batch = match sub.poll(POLL_BATCH, POLL_TIMEOUT) {
            Ok(b) => b,
            Err(_) => return,
        };
        for msg in &batch {
            let payload = match envelope::decode(&msg.payload) {
                Ok(p) => p,
                Err(e) => return core.fail(cell, node, &RuntimeError::Failed(e.to_string())),
            };
            match payload {
                Payload::Frame(frame) => {
                    let n_in = frame.num_rows();
                    match op.process(frame) {
                        Ok(out) => {
                            let n_out = emit(out);
                            core.count(cell, node, n_in, n_out);
                        }
                        Err(e) => return core.fail(cell, node, &e),
                    }
                }
                Payload::EndOfStream => {
                    match op.finish() {
                        Ok(out) => {
                            let n_out = emit(out);
                            core.count(cell, node, 0, n_out);
                        }
                        Err(e) => return core.fail(cell, node, &e),
                    }
                    publish(core, output, &Payload::EndOfStream);
                    let _ = sub.commit(msg.offset);
                    core.set_node_state(cell, node, NodeState::Succeeded);
                    return;
                }
                Payload::Failed { stage, message } => {
                    return core.fail(cell, node, &RuntimeError::Failed(format!("upstream {stage}: {message}")));
                }
            }
        }
        if let Some(last) = batch.last() {
            let _ = sub.commit(last.offset);
        }
    }
}

type NodeResult = (String, Result<Vec<TableFrame>, RuntimeError>);

fn coordinate_batch(
    core: &Core,
    cell: &RunCell,
    def: &flowforge_core::dsl::WorkflowDefinition,
    ops: Vec<(String, Box<dyn Operator>)>,
) {
    let mut pending: HashMap<String, Box<dyn Operator>> = ops.into_iter().collect();
    let mut outputs: HashMap<String, Vec<TableFrame>> = HashMap::new();
    let mut running = 0usize;
    let mut failure: Option<String> = None;
    let (tx, rx) = mpsc::channel::<NodeResult>();
    loop {
        if failure.is_none() {
            // definition order keeps start order deterministic
            for node in &def.nodes {
                let ready = pending.contains_key(&node.id)
                    && def.predecessors(&node.id).all(|p| outputs.contains_key(p));
                if !ready {
                    continue;
                }
                let mut op = pending.remove(&node.id).expect("pending node");
                let inputs: Vec<TableFrame> =
                    def.predecessors(&node.id).flat_map(|p| outputs[p].iter().cloned()).collect();
                let n_in: usize = inputs.iter().map(TableFrame::num_rows).sum();
                core.set_node_state(cell, &node.id, NodeState::Running);
                core.count(cell, &node.id, n_in, 0);
                let tx = tx.clone();
                let id = node.id.clone();
                running += 1;
                thread::spawn(move || {
                    let result = (|| {
                        let mut out = Vec::new();
                        for f in inputs {
                            out.extend(op.process(f)?);
                        }
                        out.extend(op.finish()?);
                        Ok(out)
                    })();
                    let _ = tx.send((id, result));
                });
            }
        }
        if running == 0 {
            break;
        }
        let (id, result) = rx.recv().expect("workers hold a sender");
        running -= 1;
        match result {
            Ok(frames) => {
                let n_out = frames.iter().map(TableFrame::num_rows).sum();
                core.count(cell, &id, 0, n_out);
                core.set_node_state(cell, &id, NodeState::Succeeded);
                outputs.insert(id, frames);
            }
            Err(e) => {
                core.set_node_state(cell, &id, NodeState::Failed);
                failure.get_or_insert(format!("node `{id}`: {e}"));
            }
        }
    }
    match failure {
        None if pending.is_empty() => core.set_run_state(cell, RunState::Completed, None),
        None => core.set_run_state(cell, RunState::Failed, Some("unreachable nodes".into())),
        Some(err) => core.set_run_state(cell, RunState::Failed, Some(err)),
    };
}

type Replayed = (Vec<RunRecord>, HashMap<String, RunMetrics>);

fn replay(path: &Path) -> Result<Replayed, ExecError> {
    let mut order: Vec<String> = Vec::new();
    let mut records: HashMap<String, RunRecord> = HashMap::new();
    let mut metrics: HashMap<String, RunMetrics> = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), metrics)),
        Err(e) => return Err(e.into()),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: RunEvent = serde_json::from_str(&line).map_err(|e| ExecError::Journal {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        match event {
            RunEvent::Created { run } => {
                order.push(run.run_id.clone());
                records.insert(run.run_id.clone(), run);
            }
            RunEvent::RunState { run_id, to, at_ms, error, .. } => {
                if let Some(r) = records.get_mut(&run_id) {
                    r.state = to;
                    if to.is_terminal() {
                        r.finished_at = Some(at_ms.max(r.started_at));
                    }
                    if error.is_some() {
                        r.error = error;
                    }
                }
            }
            RunEvent::NodeState { run_id, node, to, .. } => {
                if let Some(r) = records.get_mut(&run_id) {
                    r.node_states.insert(node, to);
                }
            }
            RunEvent::Metrics { metrics: m } => {
                metrics.insert(m.run_id.clone(), m);
            }
        }
    }
    let records = order.into_iter().filter_map(|id| records.remove(&id)).collect();
    Ok((records, metrics))
}
