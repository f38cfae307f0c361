//! Batch-mode builtins. Each task receives its predecessors' outputs through
//! `process` and emits its result from `finish`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use flowforge_core::operators::cluster_summary;
use flowforge_core::optimizer::ConfigurationPoint;
use flowforge_core::{Dtype, Field, TableFrame, Value};

use super::stream::{csv_options, FrameStep, IndexStrings, KMeansStep};
use super::{InitError, Operator, OperatorContext, Params, RuntimeError};
use crate::csv_source::{read_csv, CsvOptions};
use crate::table_store::TableStore;
use crate::workload::{derivative_workload, workers_for};

pub(super) fn instantiate(
    name: &str,
    p: &Params<'_>,
    ctx: &OperatorContext<'_>,
) -> Result<Option<Box<dyn Operator>>, InitError> {
    Ok(Some(match name {
        "load-csv" => Box::new(LoadCsv { path: p.path("path")?, options: csv_options(p)? }),
        "index-strings" => Box::new(Whole::new(IndexStrings { columns: p.str("columns")? })),
        "kmeans-train" => Box::new(Whole::new(KMeansStep::from_params(p)?)),
        "cluster-summary" => Box::new(Whole::new(Summary { column: p.str("column")? })),
        "save-table" => Box::new(Whole::new(SaveTable { tables: ctx.tables.clone(), name: p.str("name")? })),
        "derivative-workload" => Box::new(Derivative {
            n: p.usize("n")?,
            reps: p.usize("reps")?,
            config: ctx.config.cloned(),
        }),
        "sleep" => Box::new(Sleep { ms: p.usize("ms")? as u64, input: Vec::new() }),
        "fail" => Box::new(Fail { message: p.str("message")? }),
        "noop" => Box::new(Sleep { ms: 0, input: Vec::new() }),
        _ => return Ok(None),
    }))
}

struct LoadCsv {
    path: PathBuf,
    options: CsvOptions,
}

impl Operator for LoadCsv {
    fn process(&mut self, _: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        Ok(Vec::new())
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        Ok(vec![read_csv(&self.path, &self.options)?.frame])
    }
}

/// Concatenates all inputs and applies the step once.
struct Whole<S> {
    input: Option<TableFrame>,
    step: S,
}

impl<S> Whole<S> {
    fn new(step: S) -> Self {
        Whole { input: None, step }
    }
}

impl<S: FrameStep> Operator for Whole<S> {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        match &mut self.input {
            Some(f) => f.append(frame)?,
            None => self.input = Some(frame),
        }
        Ok(Vec::new())
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        let input = self.input.take().ok_or_else(|| RuntimeError::Failed("task received no input".into()))?;
        Ok(vec![self.step.apply(input)?])
    }
}

struct Summary {
    column: String,
}

impl FrameStep for Summary {
    fn apply(&mut self, frame: TableFrame) -> Result<TableFrame, RuntimeError> {
        Ok(cluster_summary(&frame, &self.column)?)
    }
}

struct SaveTable {
    tables: Arc<TableStore>,
    name: String,
}

impl FrameStep for SaveTable {
    fn apply(&mut self, frame: TableFrame) -> Result<TableFrame, RuntimeError> {
        self.tables.put(&self.name, &frame)?;
        Ok(frame)
    }
}

struct Derivative {
    n: usize,
    reps: usize,
    config: Option<ConfigurationPoint>,
}

impl Operator for Derivative {
    fn process(&mut self, _: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        Ok(Vec::new())
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        let r = derivative_workload(self.n, self.reps, workers_for(self.config.as_ref()))?;
        let schema = vec![
            Field::new("duration_ms", Dtype::Float),
            Field::new("checksum", Dtype::Float),
            Field::new("workers", Dtype::Int),
        ];
        let row = vec![Value::Float(r.duration_ms), Value::Float(r.checksum), Value::Int(r.workers as i64)];
        Ok(vec![TableFrame::new(schema, vec![row])?])
    }
}

struct Sleep {
    ms: u64,
    input: Vec<TableFrame>,
}

impl Operator for Sleep {
    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        self.input.push(frame);
        Ok(Vec::new())
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        std::thread::sleep(Duration::from_millis(self.ms));
        Ok(std::mem::take(&mut self.input))
    }
}

struct Fail {
    message: String,
}

impl Operator for Fail {
    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        Err(RuntimeError::Failed(self.message.clone()))
    }
}
