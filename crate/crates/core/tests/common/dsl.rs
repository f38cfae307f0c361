//! Generators for valid workflow definitions of both modes.

use std::collections::BTreeMap;

use flowforge_core::dsl::{auto_id, Edge, NodeSpec, WorkflowDefinition, WorkflowMode};
use proptest::prelude::*;

/// Series-parallel shape of a task graph, in textual order.
#[derive(Debug, Clone)]
pub enum Shape {
    Leaf,
    Series(Vec<Shape>),
    Parallel(Vec<Shape>),
}

pub fn shape() -> impl Strategy<Value = Shape> {
    Just(Shape::Leaf).prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Shape::Series),
            prop::collection::vec(inner, 2..4).prop_map(Shape::Parallel),
        ]
    })
}

/// Numbers leaves left to right and returns (entries, exits).
pub fn lay_out(shape: &Shape, next: &mut usize, edges: &mut Vec<(usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    match shape {
        Shape::Leaf => {
            let i = *next;
            *next += 1;
            (vec![i], vec![i])
        }
        Shape::Series(parts) => {
            let (entries, mut exits) = lay_out(&parts[0], next, edges);
            for p in &parts[1..] {
                let (en, ex) = lay_out(p, next, edges);
                for &a in &exits {
                    for &b in &en {
                        edges.push((a, b));
                    }
                }
                exits = ex;
            }
            (entries, exits)
        }
        Shape::Parallel(parts) => {
            let (mut entries, mut exits) = (vec![], vec![]);
            for p in parts {
                let (en, ex) = lay_out(p, next, edges);
                entries.extend(en);
                exits.extend(ex);
            }
            (entries, exits)
        }
    }
}

pub fn node_strategy() -> impl Strategy<Value = (Option<String>, String, Option<String>, BTreeMap<String, String>)> {
    (
        prop::option::weighted(0.3, "[a-z_][a-z0-9_-]{0,6}"),
        "[a-z][a-z0-9-]{0,10}",
        prop::option::weighted(0.3, "(0|[1-9][0-9]?)\\.(0|[1-9])\\.(0|[1-9])"),
        prop::collection::btree_map("[a-z_][a-zA-Z0-9_.-]{0,6}", value_strategy(), 0..4),
    )
}

pub fn value_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9_.,/:=-]{1,8}",
        any::<String>(),
        "[ \"\\\\|&<>a\n\t]{0,6}",
    ]
}

pub fn build(mode: WorkflowMode, raw: Vec<(Option<String>, String, Option<String>, BTreeMap<String, String>)>, edges: Vec<(usize, usize)>) -> WorkflowDefinition {
    let mut nodes: Vec<NodeSpec> = Vec::with_capacity(raw.len());
    let autos: Vec<String> = (0..raw.len()).map(auto_id).collect();
    for (i, (label, service, version, bindings)) in raw.into_iter().enumerate() {
        let mut id = label.unwrap_or_else(|| autos[i].clone());
        let taken = |id: &str| nodes.iter().any(|n| n.id == id) || autos.iter().enumerate().any(|(j, a)| j != i && a == id);
        if taken(&id) {
            id = autos[i].clone();
        }
        nodes.push(NodeSpec { id, service, version, bindings });
    }
    let mut edges = edges;
    edges.sort_unstable();
    edges.dedup();
    let edges = edges.into_iter().map(|(a, b)| Edge::new(nodes[a].id.clone(), nodes[b].id.clone())).collect();
    WorkflowDefinition { name: "wf".into(), mode, nodes, edges }
}

pub fn definition() -> impl Strategy<Value = WorkflowDefinition> {
    let stream = (2usize..7)
        .prop_flat_map(|n| prop::collection::vec(node_strategy(), n))
        .prop_map(|raw| {
            let edges = (1..raw.len()).map(|i| (i - 1, i)).collect();
            build(WorkflowMode::Stream, raw, edges)
        });
    let batch = shape().prop_flat_map(|s| {
        let mut edges = vec![];
        let mut n = 0;
        lay_out(&s, &mut n, &mut edges);
        prop::collection::vec(node_strategy(), n).prop_map(move |raw| build(WorkflowMode::Batch, raw, edges.clone()))
    });
    prop_oneof![stream, batch]
}
