use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::OperatorError;
use crate::frame::{Field, TableFrame};
use crate::value::{Dtype, Value};

/// Distinct labels ranked by descending frequency, ties by ascending label.
/// Index `i` of the result is the label encoded as `i`.
pub fn label_ranking<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<(&'a str, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is ascending by label, and the sort is stable.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked
}

/// Appends `<column>_idx` for each named string column: the most frequent label
/// becomes 0, the next 1, and so on.
pub fn string_indexer(frame: TableFrame, columns: &[&str]) -> Result<TableFrame, OperatorError> {
    if frame.is_empty() {
        return Err(OperatorError::EmptyFrame);
    }
    let mut encoded = Vec::with_capacity(columns.len());
    for &column in columns {
        let idx = frame.column_index(column).ok_or_else(|| OperatorError::ColumnNotFound(column.to_string()))?;
        let dtype = frame.schema()[idx].dtype;
        if dtype != Dtype::String {
            return Err(OperatorError::ColumnTypeError { column: column.to_string(), expected: "string", actual: dtype });
        }
        let ranking = label_ranking(frame.column(idx).map(|v| v.as_str().unwrap_or_default()));
        let index: BTreeMap<&str, i64> = ranking.iter().enumerate().map(|(i, (l, _))| (*l, i as i64)).collect();
        let values: Vec<Value> =
            frame.column(idx).map(|v| Value::Int(index[v.as_str().unwrap_or_default()])).collect();
        encoded.push((format!("{column}_idx"), values));
    }
    let mut out = frame;
    for (name, values) in encoded {
        out = out.with_column(Field::new(name, Dtype::Int), values)?;
    }
    Ok(out)
}
