//! Textual workflow definitions.
//!
//! Stream pipelines chain nodes with `|`:
//!
//! ```text
//! file-source --path=r.csv | string-indexer --columns=a,b | kmeans --k=3 | table-sink --name=out
//! ```
//!
//! Batch task graphs compose run-to-completion nodes with `&&` (sequence) and
//! `<a || b>` (parallel split whose branches all precede the next term):
//!
//! ```text
//! prep && <train-a || train-b> && merge
//! ```
//!
//! A node is `[label:] service[@version] (--key=value)*`. Values may be double
//! quoted with `\"` and `\\` escapes. Unlabeled nodes get ids `n0..nK` by position.

mod parse;
mod serialize;
mod validate;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{parse, parse_stream, parse_task};
pub use serialize::{serialize, SerializeError};
pub use validate::{references, validate, ValidatedWorkflow, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowMode {
    Stream,
    Batch,
}

impl fmt::Display for WorkflowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkflowMode::Stream => "stream",
            WorkflowMode::Batch => "batch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub service: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, service: impl Into<String>) -> Self {
        NodeSpec { id: id.into(), service: service.into(), version: None, bindings: BTreeMap::new() }
    }

    pub fn bind(mut self, key: &str, value: &str) -> Self {
        self.bindings.insert(key.into(), value.into());
        self
    }
}

/// Directed edge between node ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge { from: from.into(), to: to.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDefinition {
    pub name: String,
    pub mode: WorkflowMode,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Auto-assigned id of the node at `index`.
pub fn auto_id(index: usize) -> String {
    format!("n{index}")
}

impl WorkflowDefinition {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |e| e.to == id).map(|e| e.from.as_str())
    }

    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |e| e.from == id).map(|e| e.to.as_str())
    }

    /// Checks structural invariants: unique ids, known edge endpoints, acyclicity,
    /// and for streams a single linear chain in node order.
    pub fn check(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("workflow has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(format!("node {i} has an empty id"));
            }
            if self.nodes[..i].iter().any(|m| m.id == n.id) {
                return Err(format!("duplicate node id `{}`", n.id));
            }
        }
        let mut index_edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let (Some(a), Some(b)) = (self.index_of(&e.from), self.index_of(&e.to)) else {
                return Err(format!("edge {} -> {} references an unknown node", e.from, e.to));
            };
            if a == b {
                return Err(format!("self-loop on `{}`", e.from));
            }
            if self.edges[..i].contains(e) {
                return Err(format!("duplicate edge {} -> {}", e.from, e.to));
            }
            index_edges.push((a, b));
        }
        if topological_order(self.nodes.len(), &index_edges).is_none() {
            return Err("workflow graph has a cycle".into());
        }
        if self.mode == WorkflowMode::Stream {
            if self.nodes.len() < 2 {
                return Err("a stream needs at least two nodes".into());
            }
            let chain: Vec<(usize, usize)> = (1..self.nodes.len()).map(|i| (i - 1, i)).collect();
            let mut sorted = index_edges.clone();
            sorted.sort_unstable();
            if sorted != chain {
                return Err("stream nodes must form a single linear chain".into());
            }
        }
        Ok(())
    }

    /// Node indices in a dependency-respecting order (ties by position).
    pub fn topological_indices(&self) -> Option<Vec<usize>> {
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter_map(|e| Some((self.index_of(&e.from)?, self.index_of(&e.to)?)))
            .collect();
        topological_order(self.nodes.len(), &edges)
    }
}

fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    for &(_, b) in edges {
        indegree[b] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        let mut next: Vec<usize> = Vec::new();
        for &(a, b) in edges {
            if a == i {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    next.push(b);
                }
            }
        }
        ready.extend(next);
        ready.sort_unstable_by(|x, y| y.cmp(x));
    }
    (order.len() == n).then_some(order)
}
