//! Tunable parameter spaces and their normalization onto the unit hypercube.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::value::Value;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Domain {
    IntRange {
        lo: i64,
        hi: i64,
        #[serde(default)]
        scale: Scale,
        default: i64,
    },
    FloatRange {
        lo: f64,
        hi: f64,
        #[serde(default)]
        scale: Scale,
        default: f64,
    },
    Categorical {
        values: Vec<String>,
        default: String,
    },
    Boolean {
        default: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
}

impl ParamDomain {
    pub fn int(name: &str, lo: i64, hi: i64, scale: Scale, default: i64) -> Self {
        ParamDomain { name: name.to_string(), domain: Domain::IntRange { lo, hi, scale, default } }
    }

    pub fn float(name: &str, lo: f64, hi: f64, scale: Scale, default: f64) -> Self {
        ParamDomain { name: name.to_string(), domain: Domain::FloatRange { lo, hi, scale, default } }
    }

    pub fn categorical(name: &str, values: &[&str], default: &str) -> Self {
        ParamDomain {
            name: name.to_string(),
            domain: Domain::Categorical {
                values: values.iter().map(|v| v.to_string()).collect(),
                default: default.to_string(),
            },
        }
    }

    pub fn boolean(name: &str, default: bool) -> Self {
        ParamDomain { name: name.to_string(), domain: Domain::Boolean { default } }
    }

    fn check(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| Err(SpaceError::InvalidDomain { name: self.name.clone(), reason: reason.to_string() });
        match &self.domain {
            Domain::IntRange { lo, hi, scale, default } => {
                if lo >= hi {
                    return bad("lo must be below hi");
                }
                if *scale == Scale::Log && *lo <= 0 {
                    return bad("log scale needs lo > 0");
                }
                if default < lo || default > hi {
                    return bad("default outside range");
                }
            }
            Domain::FloatRange { lo, hi, scale, default } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad("lo must be below hi");
                }
                if *scale == Scale::Log && *lo <= 0.0 {
                    return bad("log scale needs lo > 0");
                }
                if !(default >= lo && default <= hi) {
                    return bad("default outside range");
                }
            }
            Domain::Categorical { values, default } => {
                if values.len() < 2 {
                    return bad("categorical needs at least two values");
                }
                if values.iter().enumerate().any(|(i, v)| values[..i].contains(v)) {
                    return bad("duplicate categorical value");
                }
                if !values.contains(default) {
                    return bad("default is not one of the values");
                }
            }
            Domain::Boolean { .. } => {}
        }
        Ok(())
    }

    pub fn default_value(&self) -> Value {
        match &self.domain {
            Domain::IntRange { default, .. } => Value::Int(*default),
            Domain::FloatRange { default, .. } => Value::Float(*default),
            Domain::Categorical { default, .. } => Value::Str(default.clone()),
            Domain::Boolean { default } => Value::Bool(*default),
        }
    }

    /// Number of distinct values for discrete dims, `None` for float ranges.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.domain {
            Domain::IntRange { lo, hi, .. } => Some((hi - lo + 1) as usize),
            Domain::FloatRange { .. } => None,
            Domain::Categorical { values, .. } => Some(values.len()),
            Domain::Boolean { .. } => Some(2),
        }
    }

    pub fn normalize(&self, value: &Value) -> Result<f64, SpaceError> {
        let out_of_domain = || SpaceError::OutOfDomain { name: self.name.clone(), value: value.clone() };
        match (&self.domain, value) {
            (Domain::IntRange { lo, hi, scale, .. }, Value::Int(v)) if v >= lo && v <= hi => {
                Ok(to_unit(*v as f64, *lo as f64, *hi as f64, *scale))
            }
            (Domain::FloatRange { lo, hi, scale, .. }, v) => match v.as_f64() {
                Some(x) if x >= *lo && x <= *hi => Ok(to_unit(x, *lo, *hi, *scale)),
                _ => Err(out_of_domain()),
            },
            (Domain::Categorical { values, .. }, Value::Str(s)) => {
                let i = values.iter().position(|v| v == s).ok_or_else(out_of_domain)?;
                Ok(i as f64 / (values.len() - 1) as f64)
            }
            (Domain::Boolean { .. }, Value::Bool(b)) => Ok(if *b { 1.0 } else { 0.0 }),
            _ => Err(out_of_domain()),
        }
    }

    /// Maps a unit coordinate (clamped to [0,1]) back into the domain.
    pub fn denormalize(&self, u: f64) -> Value {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        match &self.domain {
            Domain::IntRange { lo, hi, scale, .. } => {
                let x = from_unit(u, *lo as f64, *hi as f64, *scale);
                Value::Int((libm::round(x) as i64).clamp(*lo, *hi))
            }
            Domain::FloatRange { lo, hi, scale, .. } => Value::Float(from_unit(u, *lo, *hi, *scale).clamp(*lo, *hi)),
            Domain::Categorical { values, .. } => {
                let i = libm::round(u * (values.len() - 1) as f64) as usize;
                Value::Str(values[i.min(values.len() - 1)].clone())
            }
            Domain::Boolean { .. } => Value::Bool(u >= 0.5),
        }
    }

    /// Draws one value: uniform in unit space for ranges, uniform over values otherwise.
    pub fn sample(&self, rng: &mut impl Rng) -> Value {
        match &self.domain {
            Domain::IntRange { .. } | Domain::FloatRange { .. } => self.denormalize(rng.random::<f64>()),
            Domain::Categorical { values, .. } => Value::Str(values[rng.random_range(0..values.len())].clone()),
            Domain::Boolean { .. } => Value::Bool(rng.random::<bool>()),
        }
    }
}

fn to_unit(x: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => (x - lo) / (hi - lo),
        Scale::Log => (libm::log(x) - libm::log(lo)) / (libm::log(hi) - libm::log(lo)),
    }
}

fn from_unit(u: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => libm::exp(libm::log(lo) + u * (libm::log(hi) - libm::log(lo))),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("parameter space has no dimensions")]
    Empty,
    #[error("duplicate dimension `{0}`")]
    DuplicateDimension(String),
    #[error("dimension `{name}`: {reason}")]
    InvalidDomain { name: String, reason: String },
    #[error("value {value} is outside the domain of `{name}`")]
    OutOfDomain { name: String, value: Value },
    #[error("missing value for dimension `{0}`")]
    MissingDimension(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("expected {expected} coordinates, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

/// One assignment of every tunable knob plus its unit-cube coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationPoint {
    pub assignment: BTreeMap<String, Value>,
    pub normalized: Vec<f64>,
}

impl ConfigurationPoint {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.assignment.get(name)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        self.get(name)?.as_i64()
    }

    pub fn float(&self, name: &str) -> Option<f64> {
        self.get(name)?.as_f64()
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name)?.as_str()
    }

    pub fn bool(&self, name: &str) -> Option<bool> {
        self.get(name)?.as_bool()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct ParameterSpace {
    dims: Vec<ParamDomain>,
}

#[derive(Deserialize)]
struct RawSpace {
    dims: Vec<ParamDomain>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = SpaceError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        ParameterSpace::new(raw.dims)
    }
}

impl ParameterSpace {
    pub fn new(dims: Vec<ParamDomain>) -> Result<Self, SpaceError> {
        if dims.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].iter().any(|e| e.name == d.name) {
                return Err(SpaceError::DuplicateDimension(d.name.clone()));
            }
            d.check()?;
        }
        Ok(ParameterSpace { dims })
    }

    pub fn dims(&self) -> &[ParamDomain] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn default_point(&self) -> ConfigurationPoint {
        let assignment = self.dims.iter().map(|d| (d.name.clone(), d.default_value())).collect();
        self.point(assignment).expect("defaults are in-domain")
    }

    /// Validates an assignment and computes its normalized coordinates.
    pub fn point(&self, assignment: BTreeMap<String, Value>) -> Result<ConfigurationPoint, SpaceError> {
        if let Some(unknown) = assignment.keys().find(|k| !self.dims.iter().any(|d| &d.name == *k)) {
            return Err(SpaceError::UnknownDimension(unknown.clone()));
        }
        let mut normalized = Vec::with_capacity(self.dims.len());
        let mut typed = BTreeMap::new();
        for d in &self.dims {
            let v = assignment.get(&d.name).ok_or_else(|| SpaceError::MissingDimension(d.name.clone()))?;
            normalized.push(d.normalize(v)?);
            let v = match (&d.domain, v) {
                (Domain::FloatRange { .. }, Value::Int(i)) => Value::Float(*i as f64),
                _ => v.clone(),
            };
            typed.insert(d.name.clone(), v);
        }
        Ok(ConfigurationPoint { assignment: typed, normalized })
    }

    /// The in-domain point nearest to unit coordinates `u` (ints rounded, clamped to [0,1]).
    pub fn denormalize(&self, u: &[f64]) -> Result<ConfigurationPoint, SpaceError> {
        if u.len() != self.dims.len() {
            return Err(SpaceError::Dimension { expected: self.dims.len(), actual: u.len() });
        }
        let assignment = self.dims.iter().zip(u).map(|(d, &x)| (d.name.clone(), d.denormalize(x))).collect();
        self.point(assignment)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ConfigurationPoint {
        let assignment = self.dims.iter().map(|d| (d.name.clone(), d.sample(rng))).collect();
        self.point(assignment).expect("samples are in-domain")
    }
}

pub fn describe_point(point: &ConfigurationPoint) -> String {
    let parts: Vec<String> = point.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParamDomain::int("cores", 1, 8, Scale::Linear, 1),
            ParamDomain::int("mem", 512, 16384, Scale::Log, 1024),
            ParamDomain::float("frac", 0.1, 0.9, Scale::Linear, 0.6),
            ParamDomain::float("rate", 1e-4, 1.0, Scale::Log, 1e-2),
            ParamDomain::categorical("ser", &["java", "kryo", "avro"], "java"),
            ParamDomain::boolean("compress", false),
        ])
        .unwrap()
    }

    #[test]
    fn invalid_domains() {
        assert!(ParameterSpace::new(vec![ParamDomain::int("a", 5, 5, Scale::Linear, 5)]).is_err());
        assert!(ParameterSpace::new(vec![ParamDomain::int("a", 0, 5, Scale::Log, 1)]).is_err());
        assert!(ParameterSpace::new(vec![ParamDomain::categorical("a", &["x"], "x")]).is_err());
        assert!(ParameterSpace::new(vec![ParamDomain::float("a", 0.0, 1.0, Scale::Linear, 2.0)]).is_err());
        assert!(ParameterSpace::new(vec![ParamDomain::boolean("a", true), ParamDomain::boolean("a", true)]).is_err());
        assert!(ParameterSpace::new(vec![]).is_err());
    }

    #[test]
    fn normalization_formulas() {
        let s = space();
        let p = s.default_point();
        let ln = libm::log;
        assert_eq!(p.normalized[0], 0.0);
        assert!((p.normalized[1] - (ln(1024.0) - ln(512.0)) / (ln(16384.0) - ln(512.0))).abs() < 1e-15);
        assert!((p.normalized[2] - 0.625).abs() < 1e-15);
        assert_eq!(p.normalized[4], 0.0);
        assert_eq!(p.normalized[5], 0.0);
        let mut a = p.assignment.clone();
        a.insert("ser".into(), Value::from("avro"));
        a.insert("compress".into(), Value::Bool(true));
        let q = s.point(a).unwrap();
        assert_eq!(&q.normalized[4..], &[1.0, 1.0]);
    }

    #[test]
    fn out_of_domain_rejected() {
        let s = space();
        let mut a = s.default_point().assignment;
        a.insert("cores".into(), Value::Int(9));
        assert!(matches!(s.point(a), Err(SpaceError::OutOfDomain { .. })));
    }

    #[test]
    fn denormalize_clamps_and_rounds() {
        let s = space();
        let p = s.denormalize(&[1.7, -3.0, 0.5, 1.0, 0.6, 0.49]).unwrap();
        assert_eq!(p.int("cores"), Some(8));
        assert_eq!(p.int("mem"), Some(512));
        assert_eq!(p.str("ser"), Some("kryo"));
        assert_eq!(p.bool("compress"), Some(false));
        assert!(p.normalized.iter().all(|u| (0.0..=1.0).contains(u)));
    }
}
