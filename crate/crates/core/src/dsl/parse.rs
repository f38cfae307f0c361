use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{auto_id, Edge, NodeSpec, SyntaxError, WorkflowDefinition, WorkflowMode};
use crate::catalogue::is_service_name;

const MAX_NESTING: usize = 64;

/// Parses a stream pipeline: `node ('|' node)+`.
pub fn parse_stream(name: &str, text: &str) -> Result<WorkflowDefinition, SyntaxError> {
    let mut p = Parser::new(text);
    p.node()?;
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        if p.starts_with("||") {
            return Err(p.error("`||` is only valid inside a task split"));
        }
        if !p.eat("|") {
            return Err(p.error("expected `|`"));
        }
        p.node()?;
    }
    if p.nodes.len() < 2 {
        return Err(p.error("a stream needs at least two nodes joined by `|`"));
    }
    let edges = (1..p.nodes.len()).map(|i| (i - 1, i)).collect();
    Ok(p.finish(name, WorkflowMode::Stream, edges))
}

/// Parses a task graph: `term ('&&' term)*`, `term := node | '<' task ('||' task)+ '>'`.
pub fn parse_task(name: &str, text: &str) -> Result<WorkflowDefinition, SyntaxError> {
    let mut p = Parser::new(text);
    p.task(0)?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("expected `&&` or end of input"));
    }
    let edges = core::mem::take(&mut p.edges);
    Ok(p.finish(name, WorkflowMode::Batch, edges))
}

pub fn parse(name: &str, mode: WorkflowMode, text: &str) -> Result<WorkflowDefinition, SyntaxError> {
    match mode {
        WorkflowMode::Stream => parse_stream(name, text),
        WorkflowMode::Batch => parse_task(name, text),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
    nodes: Vec<NodeSpec>,
    edges: Vec<(usize, usize)>,
}

/// Entry and exit node indices of a parsed sub-graph.
struct Span {
    entries: Vec<usize>,
    exits: Vec<usize>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0, line: 1, column: 1, nodes: Vec::new(), edges: Vec::new() }
    }

    fn finish(self, name: &str, mode: WorkflowMode, mut edges: Vec<(usize, usize)>) -> WorkflowDefinition {
        edges.sort_unstable();
        edges.dedup();
        let edges = edges
            .into_iter()
            .map(|(a, b)| Edge::new(self.nodes[a].id.clone(), self.nodes[b].id.clone()))
            .collect();
        WorkflowDefinition { name: name.to_string(), mode, nodes: self.nodes, edges }
    }

    fn error(&self, message: &str) -> SyntaxError {
        SyntaxError { line: self.line, column: self.column, message: message.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.starts_with(s) {
            for _ in s.chars() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    /// After a token, only whitespace, end of input or an operator may follow.
    fn expect_boundary(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            None => Ok(()),
            Some(c) if c.is_whitespace() || matches!(c, '|' | '&' | '>') => Ok(()),
            Some(c) => Err(self.error(&alloc::format!("unexpected character `{c}`"))),
        }
    }

    fn task(&mut self, depth: usize) -> Result<Span, SyntaxError> {
        let first = self.term(depth)?;
        let entries = first.entries;
        let mut exits = first.exits;
        loop {
            self.skip_ws();
            if !self.eat("&&") {
                break;
            }
            let next = self.term(depth)?;
            for &a in &exits {
                for &b in &next.entries {
                    self.edges.push((a, b));
                }
            }
            exits = next.exits;
        }
        Ok(Span { entries, exits })
    }

    fn term(&mut self, depth: usize) -> Result<Span, SyntaxError> {
        self.skip_ws();
        if !self.eat("<") {
            let i = self.node()?;
            return Ok(Span { entries: vec![i], exits: vec![i] });
        }
        if depth >= MAX_NESTING {
            return Err(self.error("splits nested too deeply"));
        }
        let mut span = self.task(depth + 1)?;
        let mut branches = 1;
        loop {
            self.skip_ws();
            if self.eat("||") {
                let b = self.task(depth + 1)?;
                span.entries.extend(b.entries);
                span.exits.extend(b.exits);
                branches += 1;
            } else if self.eat(">") {
                break;
            } else if self.at_end() {
                return Err(self.error("unclosed split, expected `||` or `>`"));
            } else {
                return Err(self.error("expected `||` or `>`"));
            }
        }
        if branches < 2 {
            return Err(self.error("a split needs at least two branches"));
        }
        Ok(span)
    }

    fn word(&mut self) -> &'a str {
        self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    }

    /// Parses one node and returns its index.
    fn node(&mut self) -> Result<usize, SyntaxError> {
        self.skip_ws();
        let (start_line, start_col) = (self.line, self.column);
        let first = self.word();
        if first.is_empty() {
            return Err(self.error(if self.at_end() { "expected a node, found end of input" } else { "expected a node" }));
        }
        let mut label = None;
        let save = (self.pos, self.line, self.column);
        self.skip_ws();
        let service = if self.eat(":") {
            if !is_label(first) {
                return Err(SyntaxError {
                    line: start_line,
                    column: start_col,
                    message: alloc::format!("invalid node label `{first}`"),
                });
            }
            label = Some(first);
            self.skip_ws();
            let s = self.word();
            if s.is_empty() {
                return Err(self.error("expected a service name after label"));
            }
            s
        } else {
            (self.pos, self.line, self.column) = save;
            first
        };
        if !is_service_name(service) {
            return Err(self.error(&alloc::format!("invalid service name `{service}`")));
        }
        let version = if self.eat("@") {
            let v = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-'));
            if v.is_empty() {
                return Err(self.error("expected a version after `@`"));
            }
            Some(v.to_string())
        } else {
            None
        };
        self.expect_boundary()?;

        let mut bindings = BTreeMap::new();
        loop {
            let save = (self.pos, self.line, self.column);
            self.skip_ws();
            if !self.eat("--") {
                (self.pos, self.line, self.column) = save;
                break;
            }
            let key = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
            if key.is_empty() || !key.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
                return Err(self.error("expected a parameter name after `--`"));
            }
            if !self.eat("=") {
                return Err(self.error("expected `=` after parameter name"));
            }
            let value = self.value()?;
            if bindings.insert(key.to_string(), value).is_some() {
                return Err(self.error(&alloc::format!("parameter `{key}` bound twice")));
            }
        }

        let index = self.nodes.len();
        let id = label.map_or_else(|| auto_id(index), String::from);
        if self.nodes.iter().any(|n| n.id == id) {
            return Err(SyntaxError {
                line: start_line,
                column: start_col,
                message: alloc::format!("duplicate node id `{id}`"),
            });
        }
        self.nodes.push(NodeSpec { id, service: service.to_string(), version, bindings });
        Ok(index)
    }

    fn value(&mut self) -> Result<String, SyntaxError> {
        if !self.eat("\"") {
            let v = self.take_while(|c| !c.is_whitespace() && !is_special(c));
            if v.is_empty() {
                return Err(self.error("expected a value after `=`"));
            }
            self.expect_boundary()?;
            return Ok(v.to_string());
        }
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated quoted value")),
                Some('"') => break,
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => out.push(c),
                    Some(_) => return Err(self.error("invalid escape, only \\\" and \\\\ are allowed")),
                    None => return Err(self.error("unterminated quoted value")),
                },
                Some(c) => out.push(c),
            }
        }
        self.expect_boundary()?;
        Ok(out)
    }
}

/// Characters that end an unquoted value.
pub(super) fn is_special(c: char) -> bool {
    matches!(c, '"' | '\\' | '|' | '&' | '<' | '>')
}

pub(super) fn is_label(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
