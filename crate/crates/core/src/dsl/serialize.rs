use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::parse::is_special;
use super::{auto_id, NodeSpec, WorkflowDefinition, WorkflowMode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SerializeError {
    #[error("invalid workflow definition: {0}")]
    Invalid(String),
    #[error("task graph is not expressible with `&&` and `< || >` in node order")]
    NotSeriesParallel,
}

/// Canonical DSL text for a definition. Parsing the result yields an equal definition.
pub fn serialize(def: &WorkflowDefinition) -> Result<String, SerializeError> {
    def.check().map_err(SerializeError::Invalid)?;
    let nodes: Vec<String> = def.nodes.iter().enumerate().map(|(i, n)| node_text(i, n)).collect();
    match def.mode {
        WorkflowMode::Stream => Ok(nodes.join(" | ")),
        WorkflowMode::Batch => {
            let edges: Vec<(usize, usize)> = def
                .edges
                .iter()
                .map(|e| (def.index_of(&e.from).unwrap(), def.index_of(&e.to).unwrap()))
                .collect();
            let all: Vec<usize> = (0..def.nodes.len()).collect();
            let terms = series(&all, &edges, &nodes)?;
            Ok(terms.join(" && "))
        }
    }
}

fn node_text(index: usize, node: &NodeSpec) -> String {
    let mut out = String::new();
    if node.id != auto_id(index) {
        let _ = write!(out, "{}: ", node.id);
    }
    out.push_str(&node.service);
    if let Some(v) = &node.version {
        let _ = write!(out, "@{v}");
    }
    for (k, v) in &node.bindings {
        let _ = write!(out, " --{k}={}", quote(v));
    }
    out
}

fn quote(value: &str) -> String {
    if !value.is_empty() && !value.chars().any(|c| c.is_whitespace() || is_special(c)) {
        return value.into();
    }
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Decomposes the sub-graph induced by `set` (sorted node indices) into `&&` terms.
fn series(set: &[usize], edges: &[(usize, usize)], nodes: &[String]) -> Result<Vec<String>, SerializeError> {
    if set.len() == 1 {
        return Ok(alloc::vec![nodes[set[0]].clone()]);
    }
    let inner: Vec<(usize, usize)> =
        edges.iter().copied().filter(|(a, b)| set.contains(a) && set.contains(b)).collect();
    for k in 1..set.len() {
        let (head, tail) = set.split_at(k);
        if is_series_cut(head, tail, &inner) {
            let mut terms = series(head, edges, nodes)?;
            terms.extend(series(tail, edges, nodes)?);
            return Ok(terms);
        }
    }
    let components = components(set, &inner);
    if components.len() < 2 {
        return Err(SerializeError::NotSeriesParallel);
    }
    let mut branches = Vec::with_capacity(components.len());
    for c in &components {
        branches.push(series(c, edges, nodes)?.join(" && "));
    }
    let mut out = String::from("<");
    out.push_str(&branches.join(" || "));
    out.push('>');
    Ok(alloc::vec![out])
}

/// `head && tail` produces exactly the edges exits(head) × entries(tail) across the cut.
fn is_series_cut(head: &[usize], tail: &[usize], inner: &[(usize, usize)]) -> bool {
    let mut crossing = Vec::new();
    for &(a, b) in inner {
        match (head.contains(&a), head.contains(&b)) {
            (false, true) => return false,
            (true, false) => crossing.push((a, b)),
            _ => {}
        }
    }
    let exits: Vec<usize> =
        head.iter().copied().filter(|&h| !inner.iter().any(|&(a, b)| a == h && head.contains(&b))).collect();
    let entries: Vec<usize> =
        tail.iter().copied().filter(|&t| !inner.iter().any(|&(a, b)| b == t && tail.contains(&a))).collect();
    crossing.len() == exits.len() * entries.len()
        && exits.iter().all(|a| entries.iter().all(|b| crossing.contains(&(*a, *b))))
}

/// Weakly connected components, each sorted, ordered by smallest member.
fn components(set: &[usize], inner: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..set.len()).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for &(a, b) in inner {
        let ia = set.iter().position(|&x| x == a).unwrap();
        let ib = set.iter().position(|&x| x == b).unwrap();
        let (ra, rb) = (find(&mut label, ia), find(&mut label, ib));
        if ra != rb {
            label[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, &node) in set.iter().enumerate() {
        let root = find(&mut label, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(node),
            None => groups.push((root, alloc::vec![node])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}
