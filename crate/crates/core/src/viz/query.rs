use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::frame::{Field, FrameError, TableFrame};
use crate::value::{Dtype, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "contains")]
    Contains,
}

impl FilterOp {
    pub fn parse(text: &str) -> Option<FilterOp> {
        Some(match text {
            "=" => FilterOp::Eq,
            "!=" => FilterOp::Ne,
            "<" => FilterOp::Lt,
            "<=" => FilterOp::Le,
            ">" => FilterOp::Gt,
            ">=" => FilterOp::Ge,
            "contains" => FilterOp::Contains,
            _ => return None,
        })
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            FilterOp::Eq => ord == Ordering::Equal,
            FilterOp::Ne => ord != Ordering::Equal,
            FilterOp::Lt => ord == Ordering::Less,
            FilterOp::Le => ord != Ordering::Greater,
            FilterOp::Gt => ord == Ordering::Greater,
            FilterOp::Ge => ord != Ordering::Less,
            FilterOp::Contains => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Avg => "avg",
            AggFn::Min => "min",
            AggFn::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "fn")]
    pub func: AggFn,
    /// Source column; `*` is allowed for `count`.
    pub column: String,
}

impl Aggregate {
    /// Name of the output column: `count` for `count(*)`, else `<fn>_<column>`.
    pub fn output_name(&self) -> String {
        if self.func == AggFn::Count && self.column == "*" {
            "count".to_string()
        } else {
            format!("{}_{}", self.func.as_str(), self.column)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuerySpec {
    pub source_id: String,
    pub table: String,
    pub select: Vec<String>,
    pub filters: Vec<Filter>,
    pub group_by: Vec<String>,
    pub aggregates: Vec<Aggregate>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("type error on `{column}`: {message}")]
    TypeError { column: String, message: String },
    #[error("invalid query: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

struct BoundFilter {
    index: usize,
    op: FilterOp,
    literal: Value,
}

fn bind_filter(frame: &TableFrame, f: &Filter) -> Result<BoundFilter, QueryError> {
    let index = frame.column_index(&f.column).ok_or_else(|| QueryError::UnknownColumn(f.column.clone()))?;
    let dtype = frame.schema()[index].dtype;
    let type_error = |message: String| QueryError::TypeError { column: f.column.clone(), message };
    if f.op == FilterOp::Contains && dtype != Dtype::String {
        return Err(type_error(format!("`contains` needs a string column, found {dtype}")));
    }
    let literal = match &f.value {
        v if v.conforms_to(dtype) => v.clone(),
        Value::Str(s) => Value::parse_as(s, dtype)
            .ok_or_else(|| type_error(format!("literal \"{s}\" is not a valid {dtype}")))?,
        v => return Err(type_error(format!("literal {v} does not fit a {dtype} column"))),
    };
    Ok(BoundFilter { index, op: f.op, literal })
}

impl BoundFilter {
    fn accepts(&self, row: &[Value]) -> bool {
        let cell = &row[self.index];
        match self.op {
            FilterOp::Contains => match (cell, &self.literal) {
                (Value::Str(c), Value::Str(l)) => c.contains(l.as_str()),
                _ => false,
            },
            op => op.holds(cell.total_cmp(&self.literal)),
        }
    }
}

struct GroupKey(Vec<Value>);

impl PartialEq for GroupKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for GroupKey {}
impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.iter().zip(&other.0).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    }
}

struct BoundAggregate {
    func: AggFn,
    index: Option<usize>,
    field: Field,
}

fn bind_aggregate(frame: &TableFrame, a: &Aggregate) -> Result<BoundAggregate, QueryError> {
    let name = a.output_name();
    if a.column == "*" {
        if a.func != AggFn::Count {
            return Err(QueryError::InvalidSpec(format!("`{}` needs a column, not `*`", a.func.as_str())));
        }
        return Ok(BoundAggregate { func: a.func, index: None, field: Field::new(name, Dtype::Int) });
    }
    let index = frame.column_index(&a.column).ok_or_else(|| QueryError::UnknownColumn(a.column.clone()))?;
    let dtype = frame.schema()[index].dtype;
    let out = match a.func {
        AggFn::Count => Dtype::Int,
        AggFn::Sum | AggFn::Avg if !dtype.is_numeric() => {
            return Err(QueryError::TypeError {
                column: a.column.clone(),
                message: format!("`{}` needs a numeric column, found {dtype}", a.func.as_str()),
            })
        }
        AggFn::Avg => Dtype::Float,
        AggFn::Sum | AggFn::Min | AggFn::Max => dtype,
    };
    Ok(BoundAggregate { func: a.func, index: Some(index), field: Field::new(name, out) })
}

impl BoundAggregate {
    fn apply(&self, rows: &[&[Value]]) -> Result<Value, QueryError> {
        let Some(index) = self.index else {
            return Ok(Value::Int(rows.len() as i64));
        };
        let cells = rows.iter().map(|r| &r[index]);
        let overflow = || QueryError::InvalidSpec(format!("`{}` overflows", self.field.name));
        Ok(match self.func {
            AggFn::Count => Value::Int(rows.len() as i64),
            AggFn::Sum if self.field.dtype == Dtype::Int => {
                let mut acc: i64 = 0;
                for c in cells {
                    acc = acc.checked_add(c.as_i64().unwrap_or(0)).ok_or_else(overflow)?;
                }
                Value::Int(acc)
            }
            AggFn::Sum => Value::Float(cells.filter_map(Value::as_f64).sum()),
            AggFn::Avg => Value::Float(cells.filter_map(Value::as_f64).sum::<f64>() / rows.len() as f64),
            AggFn::Min => cells.min_by(|a, b| a.total_cmp(b)).cloned().ok_or_else(overflow)?,
            AggFn::Max => cells.max_by(|a, b| a.total_cmp(b)).cloned().ok_or_else(overflow)?,
        })
    }
}

/// Runs `spec` over `frame`: filters (conjunctive), then grouping and
/// aggregation, then projection, then limit.
///
/// Without aggregates the source row order is kept. With aggregates there is
/// one row per distinct group key in ascending key order; an empty group-by
/// aggregates the whole input as one group, and empty input yields no groups.
/// Aggregate columns are named as in [`Aggregate::output_name`].
pub fn run_query(frame: &TableFrame, spec: &QuerySpec) -> Result<TableFrame, QueryError> {
    let filters: Vec<BoundFilter> = spec.filters.iter().map(|f| bind_filter(frame, f)).collect::<Result<_, _>>()?;
    let kept: Vec<&[Value]> =
        frame.rows().iter().map(Vec::as_slice).filter(|r| filters.iter().all(|f| f.accepts(r))).collect();

    let mut result = if spec.aggregates.is_empty() {
        if !spec.group_by.is_empty() {
            return Err(QueryError::InvalidSpec("groupBy requires at least one aggregate".into()));
        }
        TableFrame::new(frame.schema().to_vec(), kept.into_iter().map(<[Value]>::to_vec).collect())?
    } else {
        aggregate(frame, spec, kept)?
    };

    if !spec.select.is_empty() {
        let indices: Vec<usize> = spec
            .select
            .iter()
            .map(|c| result.column_index(c).ok_or_else(|| QueryError::UnknownColumn(c.clone())))
            .collect::<Result<_, _>>()?;
        let schema = indices.iter().map(|&i| result.schema()[i].clone()).collect();
        let rows = result.rows().iter().map(|r| indices.iter().map(|&i| r[i].clone()).collect()).collect();
        result = TableFrame::new(schema, rows)?;
    }
    if let Some(limit) = spec.limit {
        result.truncate(limit);
    }
    Ok(result)
}

fn aggregate(frame: &TableFrame, spec: &QuerySpec, rows: Vec<&[Value]>) -> Result<TableFrame, QueryError> {
    let keys: Vec<usize> = spec
        .group_by
        .iter()
        .map(|c| frame.column_index(c).ok_or_else(|| QueryError::UnknownColumn(c.clone())))
        .collect::<Result<_, _>>()?;
    let aggs: Vec<BoundAggregate> =
        spec.aggregates.iter().map(|a| bind_aggregate(frame, a)).collect::<Result<_, _>>()?;

    let mut groups: BTreeMap<GroupKey, Vec<&[Value]>> = BTreeMap::new();
    for row in rows {
        let key = GroupKey(keys.iter().map(|&i| row[i].clone()).collect());
        groups.entry(key).or_default().push(row);
    }

    let mut schema: Vec<Field> = keys.iter().map(|&i| frame.schema()[i].clone()).collect();
    schema.extend(aggs.iter().map(|a| a.field.clone()));
    let mut out = Vec::with_capacity(groups.len());
    for (GroupKey(mut key), members) in groups {
        for a in &aggs {
            key.push(a.apply(&members)?);
        }
        out.push(key);
    }
    TableFrame::new(schema, out).map_err(|e| match e {
        FrameError::DuplicateColumn(c) => QueryError::InvalidSpec(format!("duplicate output column `{c}`")),
        e => e.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn routes() -> TableFrame {
        TableFrame::new(
            vec![Field::new("airline", Dtype::String), Field::new("stops", Dtype::Int), Field::new("km", Dtype::Float)],
            vec![
                vec!["BA".into(), 0.into(), 100.0.into()],
                vec!["AF".into(), 1.into(), 250.0.into()],
                vec!["BA".into(), 1.into(), 50.0.into()],
                vec!["LH".into(), 0.into(), 75.0.into()],
            ],
        )
        .unwrap()
    }

    fn filter(column: &str, op: FilterOp, value: Value) -> Filter {
        Filter { column: column.into(), op, value }
    }

    #[test]
    fn filter_then_project() {
        let spec = QuerySpec {
            select: vec!["km".into()],
            filters: vec![filter("airline", FilterOp::Eq, "BA".into())],
            ..Default::default()
        };
        let out = run_query(&routes(), &spec).unwrap();
        assert_eq!(out.rows(), &[vec![Value::Float(100.0)], vec![Value::Float(50.0)]]);
    }

    #[test]
    fn group_count_and_avg() {
        let spec = QuerySpec {
            group_by: vec!["stops".into()],
            aggregates: vec![
                Aggregate { func: AggFn::Count, column: "*".into() },
                Aggregate { func: AggFn::Avg, column: "km".into() },
                Aggregate { func: AggFn::Max, column: "airline".into() },
            ],
            ..Default::default()
        };
        let out = run_query(&routes(), &spec).unwrap();
        let names: Vec<&str> = out.schema().iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["stops", "count", "avg_km", "max_airline"]);
        assert_eq!(out.rows()[0], vec![Value::Int(0), Value::Int(2), Value::Float(87.5), "LH".into()]);
        assert_eq!(out.rows()[1], vec![Value::Int(1), Value::Int(2), Value::Float(150.0), "BA".into()]);
    }

    #[test]
    fn string_literal_is_coerced() {
        let spec = QuerySpec { filters: vec![filter("stops", FilterOp::Ge, "1".into())], ..Default::default() };
        assert_eq!(run_query(&routes(), &spec).unwrap().num_rows(), 2);
        let spec = QuerySpec { filters: vec![filter("stops", FilterOp::Ge, "one".into())], ..Default::default() };
        assert!(matches!(run_query(&routes(), &spec), Err(QueryError::TypeError { .. })));
        let spec = QuerySpec { filters: vec![filter("stops", FilterOp::Eq, 1.5.into())], ..Default::default() };
        assert!(matches!(run_query(&routes(), &spec), Err(QueryError::TypeError { .. })));
        let spec = QuerySpec { filters: vec![filter("km", FilterOp::Lt, 80.into())], ..Default::default() };
        assert_eq!(run_query(&routes(), &spec).unwrap().num_rows(), 2);
    }

    #[test]
    fn contains_needs_strings() {
        let spec = QuerySpec { filters: vec![filter("airline", FilterOp::Contains, "A".into())], ..Default::default() };
        assert_eq!(run_query(&routes(), &spec).unwrap().num_rows(), 3);
        let spec = QuerySpec { filters: vec![filter("km", FilterOp::Contains, "1".into())], ..Default::default() };
        assert!(matches!(run_query(&routes(), &spec), Err(QueryError::TypeError { .. })));
    }

    #[test]
    fn limit_zero_keeps_schema() {
        let out = run_query(&routes(), &QuerySpec { limit: Some(0), ..Default::default() }).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.num_columns(), 3);
    }

    #[test]
    fn errors() {
        let spec = QuerySpec { select: vec!["nope".into()], ..Default::default() };
        assert_eq!(run_query(&routes(), &spec), Err(QueryError::UnknownColumn("nope".into())));
        let spec = QuerySpec { group_by: vec!["stops".into()], ..Default::default() };
        assert!(matches!(run_query(&routes(), &spec), Err(QueryError::InvalidSpec(_))));
        let spec = QuerySpec {
            aggregates: vec![Aggregate { func: AggFn::Sum, column: "airline".into() }],
            ..Default::default()
        };
        assert!(matches!(run_query(&routes(), &spec), Err(QueryError::TypeError { .. })));
    }

    #[test]
    fn spec_json_shape() {
        let spec: QuerySpec = serde_json::from_str(
            r#"{"source_id":"internal","table":"t","filters":[{"column":"a","op":"!=","value":"x"}],
                "group_by":["a"],"aggregates":[{"fn":"count","column":"*"}],"limit":3}"#,
        )
        .unwrap();
        assert_eq!(spec.filters[0].op, FilterOp::Ne);
        assert_eq!(spec.aggregates[0].output_name(), "count");
        assert_eq!(spec.limit, Some(3));
    }
}
