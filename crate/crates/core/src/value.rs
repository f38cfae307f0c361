//! Scalar values carried in frames, parameter bindings and configuration points.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Column and value data types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    String,
    Int,
    Float,
    Bool,
}

impl Dtype {
    pub fn is_numeric(self) -> bool {
        matches!(self, Dtype::Int | Dtype::Float)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::String => "string",
            Dtype::Int => "int",
            Dtype::Float => "float",
            Dtype::Bool => "bool",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single non-null value. Serialized untagged, so JSON `3` is an int and `3.0` a float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn dtype(&self) -> Dtype {
        match self {
            Value::Bool(_) => Dtype::Bool,
            Value::Int(_) => Dtype::Int,
            Value::Float(_) => Dtype::Float,
            Value::Str(_) => Dtype::String,
        }
    }

    /// Numeric view; ints are widened.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(v) => Some(v as f64),
            Value::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// True when the value can live in a column of `dtype` (ints are accepted by float columns).
    pub fn conforms_to(&self, dtype: Dtype) -> bool {
        match (self, dtype) {
            (Value::Float(v), Dtype::Float) => v.is_finite(),
            (Value::Int(_), Dtype::Float) => true,
            (v, d) => v.dtype() == d,
        }
    }

    /// Total order used for sorting group keys and min/max. Values of different
    /// dtypes order by dtype first; numeric values compare numerically.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => a.dtype().cmp(&b.dtype()),
            },
        }
    }

    /// Parses a literal string into a value of `dtype`.
    ///
    /// int = optional sign and decimal digits; float = decimal with optional
    /// exponent; bool = `true`/`false`, case-insensitive.
    pub fn parse_as(text: &str, dtype: Dtype) -> Option<Value> {
        match dtype {
            Dtype::String => Some(Value::Str(String::from(text))),
            Dtype::Int => parse_int(text).map(Value::Int),
            Dtype::Float => parse_float(text).map(Value::Float),
            Dtype::Bool => parse_bool(text).map(Value::Bool),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(String::from(v))
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

pub fn parse_int(text: &str) -> Option<i64> {
    let digits = text.strip_prefix(['-', '+']).unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

pub fn parse_float(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut mantissa_digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        mantissa_digits += i - frac_start;
    }
    if mantissa_digits == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != bytes.len() {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_bool(text: &str) -> Option<bool> {
    if text.eq_ignore_ascii_case("true") {
        Some(true)
    } else if text.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_coercion_rules() {
        assert_eq!(Value::parse_as("3", Dtype::Int), Some(Value::Int(3)));
        assert_eq!(Value::parse_as("-12", Dtype::Int), Some(Value::Int(-12)));
        assert_eq!(Value::parse_as("3.0", Dtype::Int), None);
        assert_eq!(Value::parse_as("1e-6", Dtype::Float), Some(Value::Float(1e-6)));
        assert_eq!(Value::parse_as(".5", Dtype::Float), Some(Value::Float(0.5)));
        assert_eq!(Value::parse_as("inf", Dtype::Float), None);
        assert_eq!(Value::parse_as("1e", Dtype::Float), None);
        assert_eq!(Value::parse_as("TRUE", Dtype::Bool), Some(Value::Bool(true)));
        assert_eq!(Value::parse_as("yes", Dtype::Bool), None);
    }

    #[test]
    fn ints_conform_to_float_columns() {
        assert!(Value::Int(2).conforms_to(Dtype::Float));
        assert!(!Value::Float(2.0).conforms_to(Dtype::Int));
        assert!(!Value::Float(f64::NAN).conforms_to(Dtype::Float));
    }
}
