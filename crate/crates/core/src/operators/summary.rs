use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::OperatorError;
use crate::frame::{Field, TableFrame};
use crate::value::{Dtype, Value};

/// One row per cluster id (ascending): id, `count`, `percentage` of all rows and
/// `mean_<col>` for every other numeric column.
pub fn cluster_summary(frame: &TableFrame, cluster_col: &str) -> Result<TableFrame, OperatorError> {
    let ci = frame.column_index(cluster_col).ok_or_else(|| OperatorError::ColumnNotFound(cluster_col.to_string()))?;
    let dtype = frame.schema()[ci].dtype;
    if dtype != Dtype::Int {
        return Err(OperatorError::ColumnTypeError { column: cluster_col.to_string(), expected: "int", actual: dtype });
    }
    let numeric: Vec<usize> =
        (0..frame.num_columns()).filter(|&i| i != ci && frame.schema()[i].dtype.is_numeric()).collect();

    let mut groups: BTreeMap<i64, (usize, Vec<f64>)> = BTreeMap::new();
    for row in frame.rows() {
        let id = row[ci].as_i64().expect("int column");
        let (count, sums) = groups.entry(id).or_insert_with(|| (0, vec![0.0; numeric.len()]));
        *count += 1;
        for (s, &i) in sums.iter_mut().zip(&numeric) {
            *s += row[i].as_f64().expect("numeric column");
        }
    }

    let mut schema = vec![
        Field::new(cluster_col, Dtype::Int),
        Field::new("count", Dtype::Int),
        Field::new("percentage", Dtype::Float),
    ];
    schema.extend(numeric.iter().map(|&i| Field::new(format!("mean_{}", frame.schema()[i].name), Dtype::Float)));
    let total = frame.num_rows() as f64;
    let rows = groups
        .into_iter()
        .map(|(id, (count, sums))| {
            let mut row = vec![Value::Int(id), Value::Int(count as i64), Value::Float(count as f64 * 100.0 / total)];
            row.extend(sums.into_iter().map(|s| Value::Float(s / count as f64)));
            row
        })
        .collect();
    Ok(TableFrame::new(schema, rows)?)
}
