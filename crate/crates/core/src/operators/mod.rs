//! Table operators used by the builtin services.

mod derivative;
mod kmeans;
mod string_indexer;
mod summary;

use alloc::string::String;
use alloc::vec::Vec;

pub use derivative::{central_differences, central_differences_into, sine_grid};
pub use kmeans::{fit_kmeans, kmeans, Centroids, KMeansFit, KMeansParams, KMeansReport};
pub use string_indexer::{label_ranking, string_indexer};
pub use summary::cluster_summary;

use crate::frame::{FrameError, TableFrame};
use crate::value::Dtype;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("column `{0}` not found")]
    ColumnNotFound(String),
    #[error("column `{column}` has dtype {actual}, expected {expected}")]
    ColumnTypeError { column: String, expected: &'static str, actual: Dtype },
    #[error("input frame is empty")]
    EmptyFrame,
    #[error("k = {k} exceeds the {distinct} distinct feature vectors")]
    KTooLarge { k: usize, distinct: usize },
    #[error("feature `{0}` is not numeric")]
    NonNumericFeature(String),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Expands column patterns (`*` matches any run of characters) against a frame's
/// schema, keeping schema order and dropping duplicates.
pub fn resolve_columns(frame: &TableFrame, patterns: &[&str]) -> Result<Vec<String>, OperatorError> {
    let mut out: Vec<String> = Vec::new();
    for pattern in patterns {
        let matched: Vec<&str> = frame
            .schema()
            .iter()
            .map(|f| f.name.as_str())
            .filter(|name| glob_match(pattern, name))
            .collect();
        if matched.is_empty() {
            return Err(OperatorError::ColumnNotFound(String::from(*pattern)));
        }
        for m in matched {
            if !out.iter().any(|o| o == m) {
                out.push(String::from(m));
            }
        }
    }
    Ok(out)
}

/// Splits a comma-separated column list, trimming blanks.
pub fn split_list(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let Some((head, rest)) = pattern.split_once('*') else {
        return pattern == text;
    };
    let Some(mut remaining) = text.strip_prefix(head) else {
        return false;
    };
    let mut parts: Vec<&str> = rest.split('*').collect();
    let last = parts.pop().unwrap_or("");
    for part in parts {
        match remaining.find(part) {
            Some(at) => remaining = &remaining[at + part.len()..],
            None => return false,
        }
    }
    remaining.len() >= last.len() && remaining.ends_with(last)
}
