//! Random frames and query specs, and a naive query evaluator to compare against.

use flowforge_core::viz::{AggFn, Aggregate, Filter, FilterOp, QuerySpec};
use flowforge_core::{Dtype, Field, TableFrame, Value};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const COLUMNS: [(&str, Dtype); 4] = [("s", Dtype::String), ("i", Dtype::Int), ("f", Dtype::Float), ("b", Dtype::Bool)];

pub const WORDS: [&str; 5] = ["alpha", "beta", "gamma", "al", ""];

pub fn random_cell(dtype: Dtype, rng: &mut ChaCha8Rng) -> Value {
    match dtype {
        Dtype::String => Value::from(*WORDS.choose(rng).unwrap()),
        Dtype::Int => Value::Int(rng.random_range(-3..4)),
        Dtype::Float => Value::Float(rng.random_range(-4..5) as f64 * 0.5),
        Dtype::Bool => Value::Bool(rng.random()),
    }
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> TableFrame {
    let n = rng.random_range(0..=1000);
    let rows = (0..n).map(|_| COLUMNS.iter().map(|&(_, d)| random_cell(d, rng)).collect()).collect();
    TableFrame::new(COLUMNS.iter().map(|&(c, d)| Field::new(c, d)).collect(), rows).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> QuerySpec {
    let ops = [FilterOp::Eq, FilterOp::Ne, FilterOp::Lt, FilterOp::Le, FilterOp::Gt, FilterOp::Ge, FilterOp::Contains];
    let mut spec = QuerySpec::default();
    for _ in 0..rng.random_range(0..3) {
        let &(column, dtype) = COLUMNS.choose(rng).unwrap();
        let op = if dtype == Dtype::String { *ops.choose(rng).unwrap() } else { *ops[..6].choose(rng).unwrap() };
        let mut value = random_cell(dtype, rng);
        if dtype != Dtype::String && rng.random_bool(0.2) {
            value = Value::Str(value.to_string());
        }
        spec.filters.push(Filter { column: column.into(), op, value });
    }
    if rng.random_bool(0.5) {
        let group: Vec<&str> = ["s", "i", "b"].into_iter().filter(|_| rng.random_bool(0.5)).collect();
        spec.group_by = group.iter().map(|s| s.to_string()).collect();
        spec.aggregates.push(Aggregate { func: AggFn::Count, column: "*".into() });
        for (func, column) in [(AggFn::Sum, "i"), (AggFn::Avg, "f"), (AggFn::Min, "s"), (AggFn::Max, "f"), (AggFn::Sum, "f")] {
            if rng.random_bool(0.4) {
                spec.aggregates.push(Aggregate { func, column: column.into() });
            }
        }
        if rng.random_bool(0.3) {
            spec.select = spec.aggregates.iter().map(Aggregate::output_name).collect();
        }
    } else if rng.random_bool(0.5) {
        spec.select = ["f", "s", "i", "b"].into_iter().filter(|_| rng.random_bool(0.6)).map(String::from).collect();
    }
    if rng.random_bool(0.3) {
        spec.limit = Some(rng.random_range(0..20));
    }
    spec
}

// reference evaluator: plain loops, no shared helpers with the engine

pub fn literal_as(value: &Value, dtype: Dtype) -> Value {
    match (value, dtype) {
        (Value::Str(s), Dtype::Int) => Value::Int(s.parse().unwrap()),
        (Value::Str(s), Dtype::Float) => Value::Float(s.parse().unwrap()),
        (Value::Str(s), Dtype::Bool) => Value::Bool(s.parse().unwrap()),
        (Value::Int(i), Dtype::Float) => Value::Float(*i as f64),
        (v, _) => v.clone(),
    }
}

pub fn less(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => x < y,
        (Value::Int(x), Value::Int(y)) => x < y,
        (Value::Float(x), Value::Float(y)) => x < y,
        (Value::Bool(x), Value::Bool(y)) => !x & y,
        _ => panic!("mixed comparison"),
    }
}

pub fn keep(cell: &Value, op: FilterOp, lit: &Value) -> bool {
    match op {
        FilterOp::Eq => cell == lit,
        FilterOp::Ne => cell != lit,
        FilterOp::Lt => less(cell, lit),
        FilterOp::Le => less(cell, lit) || cell == lit,
        FilterOp::Gt => less(lit, cell),
        FilterOp::Ge => less(lit, cell) || cell == lit,
        FilterOp::Contains => cell.as_str().unwrap().contains(lit.as_str().unwrap()),
    }
}

pub fn col(name: &str) -> usize {
    COLUMNS.iter().position(|(c, _)| *c == name).unwrap()
}

pub fn reference(frame: &TableFrame, spec: &QuerySpec) -> (Vec<String>, Vec<Vec<Value>>) {
    let mut rows: Vec<Vec<Value>> = Vec::new();
    'rows: for r in frame.rows() {
        for f in &spec.filters {
            let c = col(&f.column);
            if !keep(&r[c], f.op, &literal_as(&f.value, COLUMNS[c].1)) {
                continue 'rows;
            }
        }
        rows.push(r.clone());
    }
    let mut names: Vec<String> = COLUMNS.iter().map(|(c, _)| c.to_string()).collect();
    if !spec.aggregates.is_empty() {
        let keys: Vec<usize> = spec.group_by.iter().map(|g| col(g)).collect();
        let mut groups: Vec<(Vec<Value>, Vec<Vec<Value>>)> = Vec::new();
        for r in rows {
            let key: Vec<Value> = keys.iter().map(|&k| r[k].clone()).collect();
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        groups.sort_by(|a, b| {
            for (x, y) in a.0.iter().zip(&b.0) {
                if less(x, y) {
                    return std::cmp::Ordering::Less;
                }
                if less(y, x) {
                    return std::cmp::Ordering::Greater;
                }
            }
            std::cmp::Ordering::Equal
        });
        names = spec.group_by.clone();
        names.extend(spec.aggregates.iter().map(Aggregate::output_name));
        rows = groups
            .into_iter()
            .map(|(mut key, members)| {
                for a in &spec.aggregates {
                    let cells: Vec<&Value> = if a.column == "*" { vec![] } else { members.iter().map(|m| &m[col(&a.column)]).collect() };
                    let floats = || cells.iter().map(|c| c.as_f64().unwrap());
                    key.push(match a.func {
                        AggFn::Count => Value::Int(members.len() as i64),
                        AggFn::Sum if a.column == "i" => Value::Int(cells.iter().map(|c| c.as_i64().unwrap()).sum()),
                        AggFn::Sum => Value::Float(floats().sum()),
                        AggFn::Avg => Value::Float(floats().sum::<f64>() / members.len() as f64),
                        AggFn::Min => (*cells.iter().copied().reduce(|m, c| if less(c, m) { c } else { m }).unwrap()).clone(),
                        AggFn::Max => (*cells.iter().copied().reduce(|m, c| if less(m, c) { c } else { m }).unwrap()).clone(),
                    });
                }
                key
            })
            .collect();
    }
    if !spec.select.is_empty() {
        let idx: Vec<usize> = spec.select.iter().map(|s| names.iter().position(|n| n == s).unwrap()).collect();
        rows = rows.into_iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
        names = spec.select.clone();
    }
    if let Some(l) = spec.limit {
        rows.truncate(l);
    }
    (names, rows)
}
