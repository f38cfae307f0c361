//! One data directory wired into a catalogue, workflow registry, executor,
//! optimizer jobs and the visualization backend.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use flowforge_core::catalogue::{CatalogueEntryId, CatalogueError, ServiceDescriptor, ServiceFilter, ServiceResolver};
use flowforge_core::dsl::{self, SyntaxError, ValidatedWorkflow, ValidationError, WorkflowDefinition, WorkflowMode};
use flowforge_core::optimizer::ConfigurationPoint;
use serde::{Deserialize, Serialize};

use crate::broker::Broker;
use crate::catalogue_store::{CatalogueStore, StoreError};
use crate::executor::{ExecError, Executor, RunMetrics, RunRecord};
use crate::optimizer_job::{JobError, JobRequest, OptimizationReport, OptimizerJobs};
use crate::runtime::builtin_descriptors;
use crate::smartviz::SmartViz;
use crate::table_store::{TableStore, TableStoreError};

#[derive(Debug, thiserror::Error)]
pub enum PlatformError {
    #[error(transparent)]
    Catalogue(#[from] CatalogueError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid workflow name `{0}`")]
    InvalidWorkflowName(String),
    #[error("workflow `{0}` already exists")]
    WorkflowExists(String),
    #[error("{mode} workflow `{name}` not found")]
    WorkflowNotFound { mode: WorkflowMode, name: String },
    #[error("workflow `{0}` has an active run")]
    WorkflowActive(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error("{path} line {line}: {reason}")]
    Journal { path: String, line: usize, reason: String },
    #[error(transparent)]
    Table(#[from] TableStoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<StoreError> for PlatformError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Catalogue(c) => PlatformError::Catalogue(c),
            StoreError::Journal { path, line, reason } => PlatformError::Journal { path, line, reason },
            StoreError::Io(io) => PlatformError::Io(io),
        }
    }
}

/// A defined workflow as listed by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowInfo {
    pub name: String,
    pub mode: WorkflowMode,
    pub dsl: String,
    pub definition: WorkflowDefinition,
    pub active_run: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WorkflowOp {
    Define,
    Destroy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorkflowRecord {
    op: WorkflowOp,
    mode: WorkflowMode,
    name: String,
    #[serde(default)]
    dsl: String,
}

struct Stored {
    mode: WorkflowMode,
    dsl: String,
    definition: WorkflowDefinition,
}

/// Workflow names become topic and journal keys, so they are kept to a safe alphabet.
pub fn is_workflow_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 128 && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

pub struct Platform {
    data_dir: PathBuf,
    broker: Arc<Broker>,
    tables: Arc<TableStore>,
    catalogue: CatalogueStore,
    workflows: Mutex<BTreeMap<String, Stored>>,
    executor: Executor,
    optimizer: OptimizerJobs,
    viz: Arc<SmartViz>,
}

impl Platform {
    /// Opens (or creates) the data directory, replays the journals and
    /// registers any missing builtin services.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, PlatformError> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir)?;
        let broker = Arc::new(Broker::new());
        let tables = Arc::new(TableStore::open(data_dir.join("tables"))?);
        let catalogue = CatalogueStore::open(data_dir.join("catalogue.jsonl"))?;
        for d in builtin_descriptors() {
            if catalogue.get(&d.name, Some(&d.version)).is_err() {
                catalogue.register(d)?;
            }
        }
        let workflows = replay_workflows(&data_dir.join("workflows.jsonl"))?;
        let executor = Executor::open(broker.clone(), tables.clone(), &data_dir.join("runs.jsonl"))?;
        let optimizer = OptimizerJobs::new(broker.clone(), Some(data_dir.join("optimizer")))?;
        let viz = Arc::new(SmartViz::new(tables.clone(), broker.clone()));
        Ok(Platform { data_dir, broker, tables, catalogue, workflows: Mutex::new(workflows), executor, optimizer, viz })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn tables(&self) -> &Arc<TableStore> {
        &self.tables
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn optimizer(&self) -> &OptimizerJobs {
        &self.optimizer
    }

    pub fn viz(&self) -> &Arc<SmartViz> {
        &self.viz
    }

    // services

    pub fn register_service(&self, descriptor: ServiceDescriptor) -> Result<CatalogueEntryId, PlatformError> {
        Ok(self.catalogue.register(descriptor)?)
    }

    pub fn get_service(&self, name: &str, version: Option<&str>) -> Result<ServiceDescriptor, PlatformError> {
        Ok(self.catalogue.get(name, version)?)
    }

    pub fn list_services(&self, filter: &ServiceFilter) -> Vec<ServiceDescriptor> {
        self.catalogue.list(filter)
    }

    /// Fails with `InUse` while any defined workflow resolves a node to this entry.
    pub fn unregister_service(&self, name: &str, version: &str) -> Result<ServiceDescriptor, PlatformError> {
        let workflows = self.lock_workflows();
        let referenced: BTreeSet<CatalogueEntryId> = {
            let index = self.catalogue.read();
            workflows
                .values()
                .flat_map(|w| &w.definition.nodes)
                .filter_map(|n| index.resolve(&n.service, n.version.as_deref()))
                .map(ServiceDescriptor::entry_id)
                .collect()
        };
        Ok(self.catalogue.unregister(name, version, |d| referenced.contains(&d.entry_id()))?)
    }

    // workflows

    fn lock_workflows(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Stored>> {
        self.workflows.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn journal_workflow(&self, record: &WorkflowRecord) -> Result<(), PlatformError> {
        let path = self.data_dir.join("workflows.jsonl");
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }

    /// Parses, validates against the live catalogue and records the workflow.
    pub fn define_workflow(&self, mode: WorkflowMode, name: &str, text: &str) -> Result<WorkflowInfo, PlatformError> {
        if !is_workflow_name(name) {
            return Err(PlatformError::InvalidWorkflowName(name.into()));
        }
        let definition = dsl::parse(name, mode, text)?;
        // held across validation so a concurrent unregister cannot slip in
        let mut workflows = self.lock_workflows();
        dsl::validate(&definition, &*self.catalogue.read())?;
        if workflows.contains_key(name) {
            return Err(PlatformError::WorkflowExists(name.into()));
        }
        self.journal_workflow(&WorkflowRecord { op: WorkflowOp::Define, mode, name: name.into(), dsl: text.into() })?;
        let info = WorkflowInfo { name: name.into(), mode, dsl: text.into(), definition: definition.clone(), active_run: None };
        workflows.insert(name.into(), Stored { mode, dsl: text.into(), definition });
        Ok(info)
    }

    /// Checks a definition against the live catalogue without recording it.
    pub fn validate_definition(&self, def: &WorkflowDefinition) -> Result<ValidatedWorkflow, PlatformError> {
        Ok(dsl::validate(def, &*self.catalogue.read())?)
    }

    pub fn list_workflows(&self, mode: WorkflowMode) -> Vec<WorkflowInfo> {
        let workflows = self.lock_workflows();
        workflows
            .iter()
            .filter(|(_, w)| w.mode == mode)
            .map(|(name, w)| self.info(name, w))
            .collect()
    }

    pub fn get_workflow(&self, mode: WorkflowMode, name: &str) -> Result<WorkflowInfo, PlatformError> {
        let workflows = self.lock_workflows();
        match workflows.get(name) {
            Some(w) if w.mode == mode => Ok(self.info(name, w)),
            _ => Err(PlatformError::WorkflowNotFound { mode, name: name.into() }),
        }
    }

    fn info(&self, name: &str, w: &Stored) -> WorkflowInfo {
        WorkflowInfo {
            name: name.into(),
            mode: w.mode,
            dsl: w.dsl.clone(),
            definition: w.definition.clone(),
            active_run: self.executor.active_run(name).map(|r| r.run_id),
        }
    }

    /// Re-validates against the current catalogue.
    fn validated(&self, mode: WorkflowMode, name: &str) -> Result<ValidatedWorkflow, PlatformError> {
        let workflows = self.lock_workflows();
        let w = workflows
            .get(name)
            .filter(|w| w.mode == mode)
            .ok_or_else(|| PlatformError::WorkflowNotFound { mode, name: name.into() })?;
        Ok(dsl::validate(&w.definition, &*self.catalogue.read())?)
    }

    pub fn deploy_stream(&self, name: &str, config: Option<ConfigurationPoint>) -> Result<String, PlatformError> {
        let vw = self.validated(WorkflowMode::Stream, name)?;
        Ok(self.executor.deploy_stream(&vw, config)?)
    }

    /// Undeploys the active run. With `destroy` the definition is removed too,
    /// and a stream with no active run is not an error.
    pub fn undeploy_stream(&self, name: &str, destroy: bool) -> Result<Option<RunRecord>, PlatformError> {
        self.get_workflow(WorkflowMode::Stream, name)?;
        let run = match self.executor.active_run(name) {
            Some(r) => Some(self.executor.undeploy(&r.run_id)?),
            None if destroy => None,
            None => return Err(ExecError::NotRunning(name.into()).into()),
        };
        if destroy {
            self.destroy_workflow(WorkflowMode::Stream, name)?;
        }
        Ok(run)
    }

    /// Removes a definition that has no active run.
    pub fn destroy_workflow(&self, mode: WorkflowMode, name: &str) -> Result<(), PlatformError> {
        let mut workflows = self.lock_workflows();
        if !workflows.get(name).is_some_and(|w| w.mode == mode) {
            return Err(PlatformError::WorkflowNotFound { mode, name: name.into() });
        }
        if self.executor.active_run(name).is_some() {
            return Err(PlatformError::WorkflowActive(name.into()));
        }
        self.journal_workflow(&WorkflowRecord { op: WorkflowOp::Destroy, mode, name: name.into(), dsl: String::new() })?;
        workflows.remove(name);
        Ok(())
    }

    pub fn launch_task(&self, name: &str, config: Option<ConfigurationPoint>) -> Result<String, PlatformError> {
        let vw = self.validated(WorkflowMode::Batch, name)?;
        Ok(self.executor.launch_task(&vw, config)?)
    }

    // runs

    pub fn list_runs(&self) -> Vec<RunRecord> {
        self.executor.list_runs()
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunRecord, PlatformError> {
        Ok(self.executor.get_run(run_id)?)
    }

    pub fn get_metrics(&self, run_id: &str) -> Result<RunMetrics, PlatformError> {
        Ok(self.executor.get_metrics(run_id)?)
    }

    // optimizer

    pub fn submit_job(&self, request: JobRequest) -> Result<String, PlatformError> {
        Ok(self.optimizer.submit(request)?)
    }

    pub fn get_job(&self, job_id: &str) -> Result<OptimizationReport, PlatformError> {
        Ok(self.optimizer.get(job_id)?)
    }

    /// Undeploys every running stream.
    pub fn shutdown(&self) {
        for run in self.executor.list_runs() {
            if !run.state.is_terminal() && run.mode == WorkflowMode::Stream {
                let _ = self.executor.undeploy(&run.run_id);
            }
        }
    }
}

fn replay_workflows(path: &Path) -> Result<BTreeMap<String, Stored>, PlatformError> {
    let mut workflows = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(workflows),
        Err(e) => return Err(e.into()),
    };
    let bad = |line: usize, reason: String| PlatformError::Journal { path: path.display().to_string(), line, reason };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WorkflowRecord = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        match record.op {
            WorkflowOp::Define => {
                let definition = dsl::parse(&record.name, record.mode, &record.dsl).map_err(|e| bad(i + 1, e.to_string()))?;
                workflows.insert(record.name, Stored { mode: record.mode, dsl: record.dsl, definition });
            }
            WorkflowOp::Destroy => {
                workflows.remove(&record.name);
            }
        }
    }
    Ok(workflows)
}
