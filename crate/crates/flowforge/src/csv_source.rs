//! Delimited-file reading with per-column dtype inference.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flowforge_core::{Dtype, Field, FrameError, TableFrame, Value};
use serde::{Deserialize, Serialize};

/// What to do with rows that are ragged, hold a missing marker or fail to parse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadRowPolicy {
    #[default]
    Skip,
    Fail,
}

impl BadRowPolicy {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "skip" => Some(BadRowPolicy::Skip),
            "fail" => Some(BadRowPolicy::Fail),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
    pub schema: Option<Vec<Field>>,
    pub on_bad_row: BadRowPolicy,
    /// Only the first `n` data records are read (used for discovery).
    pub max_records: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',', header: true, schema: None, on_bad_row: BadRowPolicy::Skip, max_records: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRead {
    pub frame: TableFrame,
    /// Data rows dropped under the skip policy.
    pub skipped: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema mismatch at record {record}: {reason}")]
    SchemaMismatch { record: usize, reason: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Null marker used by OpenFlights exports.
pub const NULL_MARKER: &str = "\\N";

/// Parses a schema spec such as `name:string,stops:int`.
pub fn parse_schema(text: &str) -> Result<Vec<Field>, String> {
    text.split(',')
        .map(|part| {
            let (name, dtype) = part.trim().split_once(':').ok_or_else(|| format!("`{part}` is not name:dtype"))?;
            let dtype = match dtype.trim() {
                "string" => Dtype::String,
                "int" => Dtype::Int,
                "float" => Dtype::Float,
                "bool" => Dtype::Bool,
                other => return Err(format!("unknown dtype `{other}`")),
            };
            Ok(Field::new(name.trim(), dtype))
        })
        .collect()
}

pub fn read_csv(path: &Path, options: &CsvOptions) -> Result<CsvRead, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    read_csv_from(file, options)
}

/// Reads delimited text. Without an explicit schema, each column gets the
/// narrowest of int, float, string that fits all its non-missing cells.
///
/// `\N` marks a missing value in any column and an empty cell is missing in
/// numeric or bool columns; rows with missing values, wrong arity or
/// unparseable cells are bad rows.
pub fn read_csv_from(reader: impl Read, options: &CsvOptions) -> Result<CsvRead, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Option<Vec<String>> = if options.header {
        match records.next() {
            Some(r) => Some(r?.iter().map(|s| s.trim().to_string()).collect()),
            None => None,
        }
    } else {
        None
    };
    let mut raw: Vec<csv::StringRecord> = Vec::new();
    for r in records {
        if options.max_records.is_some_and(|m| raw.len() >= m) {
            break;
        }
        raw.push(r?);
    }

    let width = match (&options.schema, &header) {
        (Some(s), _) => s.len(),
        (None, Some(h)) => h.len(),
        (None, None) => raw.first().map_or(0, |r| r.len()),
    };
    if let (Some(s), Some(h)) = (&options.schema, &header) {
        if s.len() != h.len() {
            return Err(CsvError::SchemaMismatch {
                record: 0,
                reason: format!("header has {} columns, schema {}", h.len(), s.len()),
            });
        }
    }
    let names: Vec<String> = match (&options.schema, header) {
        (Some(s), _) => s.iter().map(|f| f.name.clone()).collect(),
        (None, Some(h)) => h,
        (None, None) => (0..width).map(|i| format!("c{i}")).collect(),
    };

    let mut skipped = 0;
    let mut bad = |record: usize, reason: String| -> Result<(), CsvError> {
        match options.on_bad_row {
            BadRowPolicy::Skip => {
                skipped += 1;
                Ok(())
            }
            BadRowPolicy::Fail => Err(CsvError::SchemaMismatch { record, reason }),
        }
    };

    let record_no = |i: usize| i + 1 + usize::from(options.header);
    let mut candidates: Vec<(usize, &csv::StringRecord)> = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        if r.len() != width {
            bad(record_no(i), format!("expected {width} fields, found {}", r.len()))?;
        } else if r.iter().any(|c| c == NULL_MARKER) {
            bad(record_no(i), "missing value".into())?;
        } else {
            candidates.push((i, r));
        }
    }

    let dtypes: Vec<Dtype> = match &options.schema {
        Some(s) => s.iter().map(|f| f.dtype).collect(),
        None => (0..width).map(|c| infer(candidates.iter().map(|(_, r)| &r[c]))).collect(),
    };
    let schema: Vec<Field> = names.into_iter().zip(&dtypes).map(|(n, &d)| Field::new(n, d)).collect();

    let mut rows = Vec::with_capacity(candidates.len());
    'rows: for (i, r) in candidates {
        let mut row = Vec::with_capacity(width);
        for (cell, &dtype) in r.iter().zip(&dtypes) {
            let value = if cell.is_empty() && dtype != Dtype::String {
                None
            } else {
                Value::parse_as(cell, dtype)
            };
            match value {
                Some(v) => row.push(v),
                None => {
                    bad(record_no(i), format!("`{cell}` is not a valid {dtype}"))?;
                    continue 'rows;
                }
            }
        }
        rows.push(row);
    }
    Ok(CsvRead { frame: TableFrame::new(schema, rows)?, skipped })
}

fn infer<'a>(cells: impl Iterator<Item = &'a str>) -> Dtype {
    let mut dtype = None;
    for cell in cells.filter(|c| !c.is_empty()) {
        let fits = |d: Dtype| Value::parse_as(cell, d).is_some();
        dtype = Some(match dtype {
            None | Some(Dtype::Int) if fits(Dtype::Int) => Dtype::Int,
            None | Some(Dtype::Int) | Some(Dtype::Float) if fits(Dtype::Float) => Dtype::Float,
            _ => return Dtype::String,
        });
    }
    dtype.unwrap_or(Dtype::String)
}
