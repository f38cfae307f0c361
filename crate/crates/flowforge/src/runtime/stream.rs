//! Stream-mode builtins: sources, processors and sinks.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use flowforge_core::operators::{kmeans, resolve_columns, split_list, string_indexer, KMeansParams};
use flowforge_core::viz::{run_query, Filter, FilterOp, QuerySpec};
use flowforge_core::{Dtype, Field, TableFrame, Value};

use super::{Conservation, InitError, Operator, OperatorContext, Params, Produced, RuntimeError};
use crate::broker::now_ms;
use crate::csv_source::{parse_schema, read_csv, BadRowPolicy, CsvOptions};
use crate::table_store::TableStore;

pub(super) fn instantiate(
    name: &str,
    p: &Params<'_>,
    ctx: &OperatorContext<'_>,
) -> Result<Option<Box<dyn Operator>>, InitError> {
    Ok(Some(match name {
        "file-source" => Box::new(FileSource {
            path: p.path("path")?,
            options: csv_options(p)?,
            batch_size: p.usize("batch-size")?.max(1),
            pending: None,
        }),
        "tick-source" => Box::new(TickSource {
            interval: Duration::from_millis(p.usize("interval-ms")?.max(1) as u64),
            rows: p.usize("rows")?.max(1),
            limit: p.usize("limit")?,
            emitted: 0,
            next_due: Instant::now(),
        }),
        "string-indexer" => Box::new(Buffered::new(p.usize("window")?, IndexStrings { columns: p.str("columns")? })),
        "kmeans" => Box::new(Buffered::new(p.usize("window")?, KMeansStep::from_params(p)?)),
        "filter" => Box::new(FilterOperator::from_params(p)?),
        "table-sink" => Box::new(TableSink { tables: ctx.tables.clone(), name: p.str("name")?, written: false }),
        "log-sink" => Box::new(LogSink { seen: 0 }),
        _ => return Ok(None),
    }))
}

pub(super) fn csv_options(p: &Params<'_>) -> Result<CsvOptions, InitError> {
    let delimiter = p.str("delimiter")?;
    let [delimiter] = delimiter.as_bytes() else {
        return Err(p.err(format!("delimiter `{delimiter}` must be a single byte")));
    };
    let schema = match p.str("schema")?.as_str() {
        "" => None,
        text => Some(parse_schema(text).map_err(|e| p.err(e))?),
    };
    let on_bad_row = BadRowPolicy::parse(&p.str("on-bad-row")?).ok_or_else(|| p.err("bad on-bad-row".into()))?;
    Ok(CsvOptions { delimiter: *delimiter, header: p.bool("header")?, schema, on_bad_row, max_records: None })
}

struct FileSource {
    path: PathBuf,
    options: CsvOptions,
    batch_size: usize,
    pending: Option<std::vec::IntoIter<TableFrame>>,
}

impl Operator for FileSource {
    fn produce(&mut self) -> Result<Produced, RuntimeError> {
        if self.pending.is_none() {
            let frame = read_csv(&self.path, &self.options)?.frame;
            // an empty file still sends one frame so the schema reaches the sink
            let batches = if frame.is_empty() { vec![frame] } else { frame.chunks(self.batch_size) };
            self.pending = Some(batches.into_iter());
        }
        Ok(match self.pending.as_mut().and_then(Iterator::next) {
            Some(f) => Produced::Batch(f),
            None => Produced::End,
        })
    }
}

struct TickSource {
    interval: Duration,
    rows: usize,
    limit: usize,
    emitted: usize,
    next_due: Instant,
}

impl Operator for TickSource {
    fn produce(&mut self) -> Result<Produced, RuntimeError> {
        if self.limit > 0 && self.emitted >= self.limit {
            return Ok(Produced::End);
        }
        let now = Instant::now();
        if now < self.next_due {
            std::thread::sleep((self.next_due - now).min(Duration::from_millis(20)));
            return Ok(Produced::Idle);
        }
        self.next_due += self.interval;
        let n = if self.limit > 0 { self.rows.min(self.limit - self.emitted) } else { self.rows };
        let ts = now_ms() as i64;
        let rows = (0..n).map(|i| vec![Value::Int((self.emitted + i) as i64), Value::Int(ts)]).collect();
        self.emitted += n;
        let schema = vec![Field::new("tick", Dtype::Int), Field::new("ts_ms", Dtype::Int)];
        Ok(Produced::Batch(TableFrame::new(schema, rows)?))
    }
}

/// A whole-frame transform applied to buffered input.
pub(super) trait FrameStep: Send {
    fn apply(&mut self, frame: TableFrame) -> Result<TableFrame, RuntimeError>;
}

pub(super) struct IndexStrings {
    pub columns: String,
}

impl FrameStep for IndexStrings {
    fn apply(&mut self, frame: TableFrame) -> Result<TableFrame, RuntimeError> {
        Ok(string_indexer(frame, &split_list(&self.columns))?)
    }
}

pub(super) struct KMeansStep {
    features: String,
    params: KMeansParams,
}

impl KMeansStep {
    pub(super) fn from_params(p: &Params<'_>) -> Result<Self, InitError> {
        let k = p.usize("k")?;
        if k == 0 {
            return Err(p.err("k must be at least 1".into()));
        }
        let mut params = KMeansParams::new(&[], k, p.int("seed")? as u64);
        params.max_iter = p.usize("max-iter")?;
        params.tol = p.float("tol")?;
        Ok(KMeansStep { features: p.str("features")?, params })
    }
}

impl FrameStep for KMeansStep {
    fn apply(&mut self, frame: TableFrame) -> Result<TableFrame, RuntimeError> {
        let mut params = self.params.clone();
        params.features = resolve_columns(&frame, &split_list(&self.features))?;
        Ok(kmeans(frame, &params)?.0)
    }
}

/// Buffers input until `window` rows (or end of input when `window` is 0),
/// then applies the step to the buffered frame.
struct Buffered<S> {
    window: usize,
    buffer: Option<TableFrame>,
    step: S,
}

impl<S: FrameStep> Buffered<S> {
    fn new(window: usize, step: S) -> Self {
        Buffered { window, buffer: None, step }
    }

    fn flush(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        match self.buffer.take() {
            Some(f) if !f.is_empty() => Ok(vec![self.step.apply(f)?]),
            // nothing to fit; schema-only frames are dropped
            _ => Ok(Vec::new()),
        }
    }
}

impl<S: FrameStep> Operator for Buffered<S> {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        match &mut self.buffer {
            Some(b) => b.append(frame)?,
            None => self.buffer = Some(frame),
        }
        if self.window > 0 && self.buffer.as_ref().is_some_and(|b| b.num_rows() >= self.window) {
            return self.flush();
        }
        Ok(Vec::new())
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        self.flush()
    }

    fn conservation(&self) -> Conservation {
        Conservation::OneToOne
    }
}

struct FilterOperator {
    filter: Filter,
}

impl FilterOperator {
    fn from_params(p: &Params<'_>) -> Result<Self, InitError> {
        let op = match p.str("op")?.as_str() {
            "eq" => FilterOp::Eq,
            "ne" => FilterOp::Ne,
            "lt" => FilterOp::Lt,
            "le" => FilterOp::Le,
            "gt" => FilterOp::Gt,
            "ge" => FilterOp::Ge,
            "contains" => FilterOp::Contains,
            other => return Err(p.err(format!("unknown op `{other}`"))),
        };
        Ok(FilterOperator { filter: Filter { column: p.str("column")?, op, value: Value::Str(p.str("value")?) } })
    }
}

impl Operator for FilterOperator {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        let spec = QuerySpec { filters: vec![self.filter.clone()], ..QuerySpec::default() };
        let out = run_query(&frame, &spec).map_err(|e| RuntimeError::Failed(e.to_string()))?;
        Ok(vec![out])
    }

    fn conservation(&self) -> Conservation {
        Conservation::Filtering
    }
}

struct TableSink {
    tables: Arc<TableStore>,
    name: String,
    written: bool,
}

impl Operator for TableSink {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        if self.written {
            self.tables.append(&self.name, &frame)?;
        } else {
            self.tables.put(&self.name, &frame)?;
            self.written = true;
        }
        Ok(Vec::new())
    }
}

struct LogSink {
    seen: usize,
}

impl Operator for LogSink {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        self.seen += frame.num_rows();
        Ok(Vec::new())
    }
}
