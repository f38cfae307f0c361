//! Columnar typed tables passed between operators.
//!
//! The serde representation is the frame envelope used on the wire and in the
//! table store: `{"schema":[{"name":..,"dtype":..}],"rows":[[..],..]}`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::value::{Dtype, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub dtype: Dtype,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: Dtype) -> Self {
        Field { name: name.into(), dtype }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {actual} values, schema has {expected}")]
    Arity { row: usize, expected: usize, actual: usize },
    #[error("row {row}, column `{column}`: value does not conform to {dtype}")]
    Dtype { row: usize, column: String, dtype: Dtype },
    #[error("column `{0}` not found")]
    ColumnNotFound(String),
    #[error("schemas differ")]
    SchemaMismatch,
}

/// A table: ordered schema plus rows. Every row has schema arity and every
/// value conforms to its column dtype (float columns only ever hold `Value::Float`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame")]
pub struct TableFrame {
    schema: Vec<Field>,
    rows: Vec<Vec<Value>>,
}

#[derive(Deserialize)]
struct RawFrame {
    schema: Vec<Field>,
    #[serde(default)]
    rows: Vec<Vec<Value>>,
}

impl TryFrom<RawFrame> for TableFrame {
    type Error = FrameError;

    fn try_from(raw: RawFrame) -> Result<Self, Self::Error> {
        TableFrame::new(raw.schema, raw.rows)
    }
}

impl TableFrame {
    /// Builds a frame, widening ints stored in float columns.
    pub fn new(schema: Vec<Field>, mut rows: Vec<Vec<Value>>) -> Result<Self, FrameError> {
        for (i, f) in schema.iter().enumerate() {
            if schema[..i].iter().any(|g| g.name == f.name) {
                return Err(FrameError::DuplicateColumn(f.name.clone()));
            }
        }
        for (r, row) in rows.iter_mut().enumerate() {
            if row.len() != schema.len() {
                return Err(FrameError::Arity { row: r, expected: schema.len(), actual: row.len() });
            }
            for (v, f) in row.iter_mut().zip(&schema) {
                if !v.conforms_to(f.dtype) {
                    return Err(FrameError::Dtype { row: r, column: f.name.clone(), dtype: f.dtype });
                }
                if let (Value::Int(i), Dtype::Float) = (&*v, f.dtype) {
                    *v = Value::Float(*i as f64);
                }
            }
        }
        Ok(TableFrame { schema, rows })
    }

    pub fn empty(schema: Vec<Field>) -> Self {
        TableFrame { schema, rows: Vec::new() }
    }

    pub fn schema(&self) -> &[Field] {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<Value>> {
        self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Result<&Field, FrameError> {
        self.schema
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| FrameError::ColumnNotFound(name.to_string()))
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[index])
    }

    /// Appends a column; `values` must have one entry per row.
    pub fn with_column(mut self, field: Field, values: Vec<Value>) -> Result<Self, FrameError> {
        if self.column_index(&field.name).is_some() {
            return Err(FrameError::DuplicateColumn(field.name));
        }
        if values.len() != self.rows.len() {
            return Err(FrameError::Arity { row: 0, expected: self.rows.len(), actual: values.len() });
        }
        for (r, (row, v)) in self.rows.iter_mut().zip(values).enumerate() {
            if !v.conforms_to(field.dtype) {
                return Err(FrameError::Dtype { row: r, column: field.name.clone(), dtype: field.dtype });
            }
            let v = match (v, field.dtype) {
                (Value::Int(i), Dtype::Float) => Value::Float(i as f64),
                (v, _) => v,
            };
            row.push(v);
        }
        self.schema.push(field);
        Ok(self)
    }

    /// Appends the rows of `other`, which must have an identical schema.
    pub fn append(&mut self, other: TableFrame) -> Result<(), FrameError> {
        if self.schema != other.schema {
            return Err(FrameError::SchemaMismatch);
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Concatenates frames sharing one schema. Returns `None` for an empty input.
    pub fn concat(frames: impl IntoIterator<Item = TableFrame>) -> Result<Option<TableFrame>, FrameError> {
        let mut iter = frames.into_iter();
        let Some(mut acc) = iter.next() else {
            return Ok(None);
        };
        for f in iter {
            acc.append(f)?;
        }
        Ok(Some(acc))
    }

    /// Keeps the rows for which `keep` returns true.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(&[Value]) -> bool) {
        self.rows.retain(|r| keep(r));
    }

    /// Splits into frames of at most `size` rows (at least one frame, even when empty).
    pub fn chunks(&self, size: usize) -> Vec<TableFrame> {
        let size = size.max(1);
        if self.rows.is_empty() {
            return alloc::vec![TableFrame::empty(self.schema.clone())];
        }
        self.rows
            .chunks(size)
            .map(|c| TableFrame { schema: self.schema.clone(), rows: c.to_vec() })
            .collect()
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        self.rows.truncate(n);
    }

    /// Keeps only the last `n` rows.
    pub fn keep_last(&mut self, n: usize) {
        if self.rows.len() > n {
            let drop = self.rows.len() - n;
            self.rows.drain(..drop);
        }
    }
}
