//! Operator runtime: the interface every builtin implements and the registry
//! that maps catalogue descriptors to implementations.

mod stream;
mod task;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use flowforge_core::catalogue::{ParamSpec, ParamType, ServiceDescriptor, ServiceKind};
use flowforge_core::operators::OperatorError;
use flowforge_core::optimizer::ConfigurationPoint;
use flowforge_core::{FrameError, TableFrame, Value};

use crate::csv_source::CsvError;
use crate::table_store::{TableStore, TableStoreError};

pub const BUILTIN_VERSION: &str = "1.0.0";
pub const BUILTIN_PREFIX: &str = "builtin:";

/// What a source produced on one call.
#[derive(Debug)]
pub enum Produced {
    Batch(TableFrame),
    /// Nothing ready yet; the caller should check for shutdown and retry.
    Idle,
    End,
}

/// Declared relation between a node's input and output record counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conservation {
    /// records_out == records_in
    OneToOne,
    /// records_out <= records_in
    Filtering,
    /// Sources, sinks and tasks.
    Unconstrained,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Table(#[from] TableStoreError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot initialise node `{node}`: {reason}")]
pub struct InitError {
    pub node: String,
    pub reason: String,
}

/// A running node. Sources implement `produce`; processors and sinks `process`;
/// buffering operators flush in `finish`, which is called once at end of input.
pub trait Operator: Send {
    fn produce(&mut self) -> Result<Produced, RuntimeError> {
        Ok(Produced::End)
    }

    fn process(&mut self, frame: TableFrame) -> Result<Vec<TableFrame>, RuntimeError> {
        Ok(vec![frame])
    }

    fn finish(&mut self) -> Result<Vec<TableFrame>, RuntimeError> {
        Ok(Vec::new())
    }

    fn conservation(&self) -> Conservation {
        Conservation::Unconstrained
    }
}

pub struct OperatorContext<'a> {
    pub node_id: &'a str,
    pub bindings: &'a BTreeMap<String, Value>,
    pub tables: &'a Arc<TableStore>,
    pub config: Option<&'a ConfigurationPoint>,
}

/// Typed access to a node's coerced bindings.
struct Params<'a> {
    node: &'a str,
    bindings: &'a BTreeMap<String, Value>,
}

impl Params<'_> {
    fn get(&self, key: &str) -> Result<&Value, InitError> {
        self.bindings.get(key).ok_or_else(|| self.err(format!("parameter `{key}` is not bound")))
    }

    fn err(&self, reason: String) -> InitError {
        InitError { node: self.node.to_string(), reason }
    }

    fn str(&self, key: &str) -> Result<String, InitError> {
        match self.get(key)? {
            Value::Str(s) => Ok(s.clone()),
            other => Err(self.err(format!("parameter `{key}` = {other} is not a string"))),
        }
    }

    fn int(&self, key: &str) -> Result<i64, InitError> {
        self.get(key)?.as_i64().ok_or_else(|| self.err(format!("parameter `{key}` is not an int")))
    }

    fn usize(&self, key: &str) -> Result<usize, InitError> {
        usize::try_from(self.int(key)?).map_err(|_| self.err(format!("parameter `{key}` must be non-negative")))
    }

    fn float(&self, key: &str) -> Result<f64, InitError> {
        self.get(key)?.as_f64().ok_or_else(|| self.err(format!("parameter `{key}` is not a number")))
    }

    fn bool(&self, key: &str) -> Result<bool, InitError> {
        self.get(key)?.as_bool().ok_or_else(|| self.err(format!("parameter `{key}` is not a bool")))
    }

    fn path(&self, key: &str) -> Result<PathBuf, InitError> {
        Ok(PathBuf::from(self.str(key)?))
    }
}

/// Implementation name selected by a descriptor: the `builtin:` artifact
/// reference, or the service name when the reference is empty.
pub fn implementation_name(descriptor: &ServiceDescriptor) -> Option<&str> {
    if descriptor.framework != "builtin" {
        return None;
    }
    if descriptor.artifact_ref.is_empty() {
        return Some(&descriptor.name);
    }
    descriptor.artifact_ref.strip_prefix(BUILTIN_PREFIX)
}

pub fn instantiate(descriptor: &ServiceDescriptor, ctx: &OperatorContext<'_>) -> Result<Box<dyn Operator>, InitError> {
    let p = Params { node: ctx.node_id, bindings: ctx.bindings };
    let Some(name) = implementation_name(descriptor) else {
        return Err(p.err(format!(
            "no runtime for framework `{}` (artifact `{}`)",
            descriptor.framework, descriptor.artifact_ref
        )));
    };
    let op = match (name, descriptor.kind) {
        (_, ServiceKind::Task) => task::instantiate(name, &p, ctx)?,
        _ => stream::instantiate(name, &p, ctx)?,
    };
    op.ok_or_else(|| p.err(format!("unknown {} implementation `{name}`", descriptor.kind)))
}

fn describe(name: &str, kind: ServiceKind, description: &str, params: Vec<ParamSpec>) -> ServiceDescriptor {
    let mut d = ServiceDescriptor::new(name, BUILTIN_VERSION, kind);
    d.description = description.to_string();
    d.params = params;
    d.artifact_ref = format!("{BUILTIN_PREFIX}{name}");
    d.tags.insert("builtin".into());
    d
}

fn csv_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::required("path", ParamType::String).with_doc("delimited file to read"),
        ParamSpec::optional("delimiter", ParamType::String, ","),
        ParamSpec::optional("header", ParamType::Bool, true),
        ParamSpec::optional("on-bad-row", ParamType::Enum, "skip").with_allowed(&["skip", "fail"]),
        ParamSpec::optional("schema", ParamType::String, "").with_doc("name:dtype list; empty infers"),
    ]
}

fn kmeans_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::optional("features", ParamType::String, "*_idx").with_doc("comma-separated columns, `*` wildcards"),
        ParamSpec::required("k", ParamType::Int),
        ParamSpec::optional("seed", ParamType::Int, 0i64),
        ParamSpec::optional("max-iter", ParamType::Int, 100i64),
        ParamSpec::optional("tol", ParamType::Float, 1e-6),
    ]
}

/// Descriptors of every builtin operator, as seeded into a fresh catalogue.
pub fn builtin_descriptors() -> Vec<ServiceDescriptor> {
    use ParamType::*;
    use ServiceKind::*;
    let window = || ParamSpec::optional("window", Int, 0i64).with_doc("rows per fit; 0 waits for end of stream");
    let mut file_source = csv_params();
    file_source.push(ParamSpec::optional("batch-size", Int, 128i64));
    let mut indexer = vec![ParamSpec::required("columns", String)];
    indexer.push(window());
    let mut kmeans = kmeans_params();
    kmeans.push(window());
    vec![
        describe("file-source", Source, "read a delimited file in batches", file_source),
        describe(
            "tick-source",
            Source,
            "emit numbered rows on a timer",
            vec![
                ParamSpec::optional("interval-ms", Int, 100i64),
                ParamSpec::optional("rows", Int, 1i64),
                ParamSpec::optional("limit", Int, 0i64).with_doc("stop after this many rows; 0 never stops"),
            ],
        ),
        describe("string-indexer", Processor, "index string labels by descending frequency", indexer),
        describe("kmeans", Processor, "k-means clustering, appends a cluster column", kmeans),
        describe(
            "filter",
            Processor,
            "keep rows matching a comparison",
            vec![
                ParamSpec::required("column", String),
                ParamSpec::optional("op", Enum, "eq").with_allowed(&["eq", "ne", "lt", "le", "gt", "ge", "contains"]),
                ParamSpec::required("value", String),
            ],
        ),
        describe("table-sink", Sink, "store rows in the internal table store", vec![ParamSpec::required("name", String)]),
        describe("log-sink", Sink, "count and discard rows", vec![]),
        describe("load-csv", Task, "load a delimited file", csv_params()),
        describe("index-strings", Task, "index string labels by descending frequency", vec![ParamSpec::required("columns", String)]),
        describe("kmeans-train", Task, "k-means clustering, appends a cluster column", kmeans_params()),
        describe(
            "cluster-summary",
            Task,
            "per-cluster counts, percentages and means",
            vec![ParamSpec::optional("column", String, "cluster")],
        ),
        describe("save-table", Task, "store the input in the internal table store", vec![ParamSpec::required("name", String)]),
        describe(
            "derivative-workload",
            Task,
            "central differences over a sine grid, parallelism from the deployment config",
            vec![ParamSpec::optional("n", Int, 100_000i64), ParamSpec::optional("reps", Int, 10i64)],
        ),
        describe("sleep", Task, "pass input through after a delay", vec![ParamSpec::optional("ms", Int, 100i64)]),
        describe("fail", Task, "always fails", vec![ParamSpec::optional("message", String, "requested failure")]),
        describe("noop", Task, "pass input through", vec![]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_and_instantiable() {
        let dir = tempfile::tempdir().unwrap();
        let tables = Arc::new(TableStore::open(dir.path()).unwrap());
        for d in builtin_descriptors() {
            assert!(d.validate().is_ok(), "{}", d.name);
            let mut bindings: BTreeMap<String, Value> =
                d.params.iter().filter_map(|p| Some((p.name.clone(), p.typed_default()?))).collect();
            for p in d.params.iter().filter(|p| p.required) {
                let v = match p.dtype {
                    ParamType::Int => Value::Int(2),
                    _ => Value::from("x"),
                };
                bindings.insert(p.name.clone(), v);
            }
            let ctx = OperatorContext { node_id: "n0", bindings: &bindings, tables: &tables, config: None };
            assert!(instantiate(&d, &ctx).is_ok(), "{}", d.name);
        }
    }

    #[test]
    fn unknown_implementation() {
        let dir = tempfile::tempdir().unwrap();
        let tables = Arc::new(TableStore::open(dir.path()).unwrap());
        let mut d = ServiceDescriptor::new("mystery", "1.0.0", ServiceKind::Processor);
        let ctx = OperatorContext { node_id: "n1", bindings: &BTreeMap::new(), tables: &tables, config: None };
        assert_eq!(instantiate(&d, &ctx).err().unwrap().node, "n1");
        d.framework = "spark".into();
        d.artifact_ref = "builtin:filter".into();
        assert!(instantiate(&d, &ctx).is_err());
    }
}
