//! Visualization backend: data-source connectors, table discovery, queries,
//! chart recommendation and timed refresh.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use flowforge_core::viz::{recommend_charts, run_query, ChartRecommendation, QueryError, QuerySpec, RecommendError};
use flowforge_core::{Dtype, Field, FrameError, TableFrame, Value};
use serde::{Deserialize, Serialize};

use crate::broker::Broker;
use crate::csv_source::{read_csv, CsvError, CsvOptions};
use crate::envelope::{self, Payload};
use crate::table_store::{TableInfo, TableStore, TableStoreError};

pub const INTERNAL_SOURCE: &str = "internal";
pub const DISCOVERY_SAMPLE_ROWS: usize = 1000;
pub const DEFAULT_STREAM_WINDOW: usize = 1000;
pub const MIN_REFRESH_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Internal,
    DelimitedFile,
    JsonlFile,
    StreamTopic,
}

impl SourceKind {
    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "internal" => SourceKind::Internal,
            "delimited-file" => SourceKind::DelimitedFile,
            "jsonl-file" => SourceKind::JsonlFile,
            "stream-topic" => SourceKind::StreamTopic,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceOptions {
    pub delimiter: String,
    pub header: bool,
    /// Sliding window size for stream topics.
    pub window: usize,
}

impl Default for SourceOptions {
    fn default() -> Self {
        SourceOptions { delimiter: ",".into(), header: true, window: DEFAULT_STREAM_WINDOW }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSourceRef {
    pub id: String,
    pub kind: SourceKind,
    pub location: String,
    pub options: SourceOptions,
}

/// Body of an add-source request; `kind` stays a string so unknown kinds are reported, not rejected by parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewSource {
    #[serde(default)]
    pub id: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub options: SourceOptions,
}

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error("source unreachable: {0}")]
    UnreachableSource(String),
    #[error("unsupported source kind `{0}`")]
    UnsupportedKind(String),
    #[error("source `{0}` not found")]
    UnknownSource(String),
    #[error("source `{0}` already exists")]
    DuplicateSource(String),
    #[error("table `{table}` not found in source `{source_id}`")]
    UnknownTable { source_id: String, table: String },
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("refresh interval must be at least {MIN_REFRESH_MS} ms")]
    InvalidInterval,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Table(#[from] TableStoreError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Exposes a data source's tables and their rows.
pub trait Connector: Send + Sync {
    fn tables(&self) -> Result<Vec<TableInfo>, VizError>;
    fn read(&self, table: &str) -> Result<TableFrame, VizError>;
}

struct InternalConnector {
    store: Arc<TableStore>,
}

impl Connector for InternalConnector {
    fn tables(&self) -> Result<Vec<TableInfo>, VizError> {
        Ok(self.store.list()?)
    }

    fn read(&self, table: &str) -> Result<TableFrame, VizError> {
        self.store.get(table).map_err(|e| match e {
            TableStoreError::NotFound(_) | TableStoreError::InvalidName(_) => {
                VizError::UnknownTable { source_id: INTERNAL_SOURCE.into(), table: table.into() }
            }
            other => other.into(),
        })
    }
}

fn file_table_name(path: &std::path::Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string()
}

/// One table named after the file stem; dtypes come from the first 1000 rows.
struct DelimitedConnector {
    id: String,
    path: PathBuf,
    options: CsvOptions,
}

impl DelimitedConnector {
    fn sample_schema(&self) -> Result<Vec<Field>, VizError> {
        let sample = CsvOptions { max_records: Some(DISCOVERY_SAMPLE_ROWS), ..self.options.clone() };
        Ok(read_csv(&self.path, &sample)?.frame.schema().to_vec())
    }

    fn check_table(&self, table: &str) -> Result<(), VizError> {
        if table == file_table_name(&self.path) {
            Ok(())
        } else {
            Err(VizError::UnknownTable { source_id: self.id.clone(), table: table.into() })
        }
    }
}

impl Connector for DelimitedConnector {
    fn tables(&self) -> Result<Vec<TableInfo>, VizError> {
        let name = file_table_name(&self.path);
        let frame = self.read(&name)?;
        Ok(vec![TableInfo { name, columns: frame.schema().to_vec(), row_count: frame.num_rows() }])
    }

    fn read(&self, table: &str) -> Result<TableFrame, VizError> {
        self.check_table(table)?;
        let options = CsvOptions { schema: Some(self.sample_schema()?), ..self.options.clone() };
        Ok(read_csv(&self.path, &options)?.frame)
    }
}

/// One JSON object per line; columns in first-seen key order.
struct JsonlConnector {
    id: String,
    path: PathBuf,
}

impl JsonlConnector {
    fn load(&self) -> Result<TableFrame, VizError> {
        let file = File::open(&self.path).map_err(|e| VizError::UnreachableSource(format!("{}: {e}", self.path.display())))?;
        let mut columns: Vec<String> = Vec::new();
        let mut objects = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| VizError::UnreachableSource(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(&line) else {
                continue;
            };
            for k in obj.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
            objects.push(obj);
        }
        let dtype_of = |c: &str| {
            let mut d: Option<Dtype> = None;
            for o in &objects {
                let vd = match o.get(c) {
                    Some(serde_json::Value::Bool(_)) => Dtype::Bool,
                    Some(serde_json::Value::Number(n)) if n.is_i64() => Dtype::Int,
                    Some(serde_json::Value::Number(_)) => Dtype::Float,
                    Some(serde_json::Value::String(_)) => Dtype::String,
                    _ => continue,
                };
                d = Some(match (d, vd) {
                    (None, v) => v,
                    (Some(a), b) if a == b => a,
                    (Some(Dtype::Int), Dtype::Float) | (Some(Dtype::Float), Dtype::Int) => Dtype::Float,
                    _ => Dtype::String,
                });
            }
            d.unwrap_or(Dtype::String)
        };
        let schema: Vec<Field> = columns.iter().map(|c| Field::new(c.as_str(), dtype_of(c))).collect();
        let rows = objects
            .iter()
            .filter_map(|o| {
                schema
                    .iter()
                    .map(|f| match (o.get(&f.name)?, f.dtype) {
                        (serde_json::Value::String(s), _) => Some(Value::Str(s.clone())),
                        (v, Dtype::String) => Some(Value::Str(v.to_string())),
                        (serde_json::Value::Bool(b), Dtype::Bool) => Some(Value::Bool(*b)),
                        (serde_json::Value::Number(n), Dtype::Int) => n.as_i64().map(Value::Int),
                        (serde_json::Value::Number(n), Dtype::Float) => n.as_f64().map(Value::Float),
                        _ => None,
                    })
                    .collect::<Option<Vec<Value>>>()
            })
            .collect();
        Ok(TableFrame::new(schema, rows)?)
    }
}

impl Connector for JsonlConnector {
    fn tables(&self) -> Result<Vec<TableInfo>, VizError> {
        let frame = self.load()?;
        Ok(vec![TableInfo { name: file_table_name(&self.path), columns: frame.schema().to_vec(), row_count: frame.num_rows() }])
    }

    fn read(&self, table: &str) -> Result<TableFrame, VizError> {
        if table != file_table_name(&self.path) {
            return Err(VizError::UnknownTable { source_id: self.id.clone(), table: table.into() });
        }
        self.load()
    }
}

/// Folds frame envelopes published on a topic into a window of the last `window` rows.
struct StreamConnector {
    id: String,
    topic: String,
    window: usize,
    broker: Arc<Broker>,
    state: Mutex<(u64, Option<TableFrame>)>,
}

impl StreamConnector {
    fn refresh(&self) -> Result<Option<TableFrame>, VizError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let batch = self.broker.fetch(&self.topic, state.0, 256);
            let Some(last) = batch.last() else { break };
            state.0 = last.offset + 1;
            for m in &batch {
                if let Ok(Payload::Frame(f)) = envelope::decode(&m.payload) {
                    match &mut state.1 {
                        Some(w) if w.schema() == f.schema() => w.append(f)?,
                        // a schema change restarts the window
                        w => *w = Some(f),
                    }
                }
            }
            if let Some(w) = &mut state.1 {
                w.keep_last(self.window);
            }
        }
        Ok(state.1.clone())
    }
}

impl Connector for StreamConnector {
    fn tables(&self) -> Result<Vec<TableInfo>, VizError> {
        Ok(self
            .refresh()?
            .map(|f| TableInfo { name: self.topic.clone(), columns: f.schema().to_vec(), row_count: f.num_rows() })
            .into_iter()
            .collect())
    }

    fn read(&self, table: &str) -> Result<TableFrame, VizError> {
        if table != self.topic {
            return Err(VizError::UnknownTable { source_id: self.id.clone(), table: table.into() });
        }
        self.refresh()?.ok_or_else(|| VizError::UnknownTable { source_id: self.id.clone(), table: table.into() })
    }
}

struct Source {
    reference: DataSourceRef,
    connector: Arc<dyn Connector>,
}

pub struct SmartViz {
    store: Arc<TableStore>,
    broker: Arc<Broker>,
    sources: RwLock<BTreeMap<String, Source>>,
}

impl SmartViz {
    /// Starts with the `internal` source over the table store.
    pub fn new(store: Arc<TableStore>, broker: Arc<Broker>) -> Self {
        let viz = SmartViz { store, broker, sources: RwLock::default() };
        let internal = NewSource {
            id: Some(INTERNAL_SOURCE.into()),
            kind: "internal".into(),
            location: String::new(),
            options: SourceOptions::default(),
        };
        viz.add_source(internal).expect("internal source");
        viz
    }

    pub fn add_source(&self, new: NewSource) -> Result<DataSourceRef, VizError> {
        let kind = SourceKind::parse(&new.kind).ok_or_else(|| VizError::UnsupportedKind(new.kind.clone()))?;
        let mut sources = self.sources.write().unwrap_or_else(|e| e.into_inner());
        let id = match new.id {
            Some(id) if id.is_empty() => return Err(VizError::InvalidSource("id must not be empty".into())),
            Some(id) => id,
            None => (1..).map(|n| format!("src-{n}")).find(|id| !sources.contains_key(id)).expect("unbounded"),
        };
        if sources.contains_key(&id) {
            return Err(VizError::DuplicateSource(id));
        }
        let path = PathBuf::from(&new.location);
        let file_kind = matches!(kind, SourceKind::DelimitedFile | SourceKind::JsonlFile);
        if file_kind && !path.is_file() {
            return Err(VizError::UnreachableSource(format!("{} is not a readable file", new.location)));
        }
        let connector: Arc<dyn Connector> = match kind {
            SourceKind::Internal => Arc::new(InternalConnector { store: self.store.clone() }),
            SourceKind::DelimitedFile => {
                let [delimiter] = new.options.delimiter.as_bytes() else {
                    return Err(VizError::InvalidSource("delimiter must be a single byte".into()));
                };
                let options = CsvOptions { delimiter: *delimiter, header: new.options.header, ..CsvOptions::default() };
                Arc::new(DelimitedConnector { id: id.clone(), path, options })
            }
            SourceKind::JsonlFile => Arc::new(JsonlConnector { id: id.clone(), path }),
            SourceKind::StreamTopic => {
                if new.location.is_empty() {
                    return Err(VizError::InvalidSource("stream-topic needs a topic as location".into()));
                }
                Arc::new(StreamConnector {
                    id: id.clone(),
                    topic: new.location.clone(),
                    window: new.options.window.max(1),
                    broker: self.broker.clone(),
                    state: Mutex::new((0, None)),
                })
            }
        };
        let reference = DataSourceRef { id: id.clone(), kind, location: new.location, options: new.options };
        sources.insert(id, Source { reference: reference.clone(), connector });
        Ok(reference)
    }

    pub fn list_sources(&self) -> Vec<DataSourceRef> {
        self.sources.read().unwrap_or_else(|e| e.into_inner()).values().map(|s| s.reference.clone()).collect()
    }

    fn connector(&self, id: &str) -> Result<Arc<dyn Connector>, VizError> {
        let sources = self.sources.read().unwrap_or_else(|e| e.into_inner());
        sources.get(id).map(|s| s.connector.clone()).ok_or_else(|| VizError::UnknownSource(id.into()))
    }

    pub fn list_tables(&self, source_id: &str) -> Result<Vec<TableInfo>, VizError> {
        self.connector(source_id)?.tables()
    }

    pub fn read_table(&self, source_id: &str, table: &str) -> Result<TableFrame, VizError> {
        self.connector(source_id)?.read(table)
    }

    pub fn query(&self, spec: &QuerySpec) -> Result<TableFrame, VizError> {
        let id = if spec.source_id.is_empty() { INTERNAL_SOURCE } else { spec.source_id.as_str() };
        let frame = self.read_table(id, &spec.table)?;
        Ok(run_query(&frame, spec)?)
    }

    pub fn recommend(&self, frame: &TableFrame) -> Result<Vec<ChartRecommendation>, VizError> {
        Ok(recommend_charts(frame)?)
    }

    /// Re-runs `spec` every `interval_ms` on a timer thread, passing each result
    /// to `emit` until it returns false or the handle is cancelled.
    pub fn stream_refresh(
        self: &Arc<Self>,
        spec: QuerySpec,
        interval_ms: u64,
        mut emit: impl FnMut(Result<TableFrame, VizError>) -> bool + Send + 'static,
    ) -> Result<RefreshHandle, VizError> {
        if interval_ms < MIN_REFRESH_MS {
            return Err(VizError::InvalidInterval);
        }
        let id = if spec.source_id.is_empty() { INTERNAL_SOURCE } else { spec.source_id.as_str() };
        self.connector(id)?;
        let viz = self.clone();
        let signal = Arc::new((Mutex::new(false), Condvar::new()));
        let stop = signal.clone();
        let interval = Duration::from_millis(interval_ms);
        let worker = thread::spawn(move || {
            let (lock, cvar) = &*stop;
            let mut next = Instant::now();
            loop {
                if *lock.lock().unwrap_or_else(|e| e.into_inner()) {
                    return;
                }
                if !emit(viz.query(&spec)) {
                    return;
                }
                next += interval;
                let mut cancelled = lock.lock().unwrap_or_else(|e| e.into_inner());
                while !*cancelled {
                    let now = Instant::now();
                    if now >= next {
                        break;
                    }
                    cancelled = cvar.wait_timeout(cancelled, next - now).unwrap_or_else(|e| e.into_inner()).0;
                }
            }
        });
        Ok(RefreshHandle { signal, worker: Some(worker) })
    }
}

/// Owns a refresh timer; dropping it cancels.
pub struct RefreshHandle {
    signal: Arc<(Mutex<bool>, Condvar)>,
    worker: Option<thread::JoinHandle<()>>,
}

impl RefreshHandle {
    /// Stops emissions and waits for the timer thread to exit.
    pub fn cancel(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let (lock, cvar) = &*self.signal;
        *lock.lock().unwrap_or_else(|e| e.into_inner()) = true;
        cvar.notify_all();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for RefreshHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
