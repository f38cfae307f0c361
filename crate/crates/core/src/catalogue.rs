//! Service descriptors and the in-memory catalogue index.
//!
//! Persistence lives in the std companion crate; this module owns validation,
//! version resolution and lookup.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use semver::Version;
use serde::{Deserialize, Serialize};

use crate::value::{Dtype, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Source,
    Processor,
    Sink,
    Task,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Source => "source",
            ServiceKind::Processor => "processor",
            ServiceKind::Sink => "sink",
            ServiceKind::Task => "task",
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Int,
    Float,
    Bool,
    Enum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub dtype: ParamType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed_values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub doc: String,
}

impl ParamSpec {
    pub fn required(name: &str, dtype: ParamType) -> Self {
        ParamSpec {
            name: name.to_string(),
            dtype,
            allowed_values: Vec::new(),
            default: None,
            required: true,
            doc: String::new(),
        }
    }

    pub fn optional(name: &str, dtype: ParamType, default: impl Into<Value>) -> Self {
        ParamSpec {
            name: name.to_string(),
            dtype,
            allowed_values: Vec::new(),
            default: Some(default.into()),
            required: false,
            doc: String::new(),
        }
    }

    pub fn with_allowed(mut self, values: &[&str]) -> Self {
        self.allowed_values = values.iter().map(|v| v.to_string()).collect();
        self
    }

    pub fn with_doc(mut self, doc: &str) -> Self {
        self.doc = doc.to_string();
        self
    }

    /// Coerces a DSL literal into a typed value for this parameter.
    pub fn coerce(&self, literal: &str) -> Option<Value> {
        match self.dtype {
            ParamType::String => Some(Value::Str(literal.to_string())),
            ParamType::Int => Value::parse_as(literal, Dtype::Int),
            ParamType::Float => Value::parse_as(literal, Dtype::Float),
            ParamType::Bool => Value::parse_as(literal, Dtype::Bool),
            ParamType::Enum => self
                .allowed_values
                .iter()
                .any(|a| a == literal)
                .then(|| Value::Str(literal.to_string())),
        }
    }

    /// Normalizes a default to its canonical typed form (ints widened for floats).
    pub fn typed_default(&self) -> Option<Value> {
        match (&self.default, self.dtype) {
            (Some(Value::Int(i)), ParamType::Float) => Some(Value::Float(*i as f64)),
            (d, _) => d.clone(),
        }
    }

    fn default_conforms(&self, value: &Value) -> bool {
        match (self.dtype, value) {
            (ParamType::String, Value::Str(_)) => true,
            (ParamType::Int, Value::Int(_)) => true,
            (ParamType::Float, Value::Int(_)) => true,
            (ParamType::Float, Value::Float(v)) => v.is_finite(),
            (ParamType::Bool, Value::Bool(_)) => true,
            (ParamType::Enum, Value::Str(s)) => self.allowed_values.iter().any(|a| a == s),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub name: String,
    pub version: String,
    pub kind: ServiceKind,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_framework")]
    pub framework: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    /// Opaque artifact reference; builtins use `builtin:<implementation>`.
    #[serde(default)]
    pub artifact_ref: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

fn default_framework() -> String {
    String::from("builtin")
}

impl ServiceDescriptor {
    pub fn new(name: &str, version: &str, kind: ServiceKind) -> Self {
        ServiceDescriptor {
            name: name.to_string(),
            version: version.to_string(),
            kind,
            description: String::new(),
            framework: default_framework(),
            params: Vec::new(),
            artifact_ref: String::new(),
            tags: BTreeSet::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn entry_id(&self) -> CatalogueEntryId {
        CatalogueEntryId { name: self.name.clone(), version: self.version.clone() }
    }

    /// Checks every descriptor invariant, collecting field-level reasons.
    pub fn validate(&self) -> Result<Version, Vec<FieldIssue>> {
        let mut issues = Vec::new();
        if !is_service_name(&self.name) {
            issues.push(FieldIssue::new("name", "must match [a-z][a-z0-9-]* and be 1..64 characters"));
        }
        let version = match Version::parse(&self.version) {
            Ok(v) => Some(v),
            Err(e) => {
                issues.push(FieldIssue::new("version", &format!("not a semantic version: {e}")));
                None
            }
        };
        for (i, p) in self.params.iter().enumerate() {
            let field = format!("params[{i}]");
            if !is_param_name(&p.name) {
                issues.push(FieldIssue::new(&field, "name must match [A-Za-z_][A-Za-z0-9_.-]*"));
            }
            if self.params[..i].iter().any(|q| q.name == p.name) {
                issues.push(FieldIssue::new(&field, &format!("duplicate parameter `{}`", p.name)));
            }
            match (p.dtype, p.allowed_values.is_empty()) {
                (ParamType::Enum, true) => issues.push(FieldIssue::new(&field, "enum parameter needs allowed_values")),
                (ParamType::Enum, false) | (_, true) => {}
                (_, false) => issues.push(FieldIssue::new(&field, "allowed_values only apply to enum parameters")),
            }
            match (&p.default, p.required) {
                (Some(_), true) => issues.push(FieldIssue::new(&field, "required parameter must not have a default")),
                (None, false) => issues.push(FieldIssue::new(&field, "optional parameter needs a default")),
                (Some(d), false) if !p.default_conforms(d) => {
                    issues.push(FieldIssue::new(&field, "default does not conform to dtype/allowed_values"))
                }
                _ => {}
            }
        }
        match (version, issues.is_empty()) {
            (Some(v), true) => Ok(v),
            _ => Err(issues),
        }
    }
}

/// `[a-z][a-z0-9-]*`, 1..64 characters.
pub fn is_service_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 64
        && bytes[0].is_ascii_lowercase()
        && bytes.iter().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'-')
}

fn is_param_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    !bytes.is_empty()
        && (bytes[0].is_ascii_alphabetic() || bytes[0] == b'_')
        && bytes.iter().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub reason: String,
}

impl FieldIssue {
    fn new(field: &str, reason: &str) -> Self {
        FieldIssue { field: field.to_string(), reason: reason.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CatalogueEntryId {
    pub name: String,
    pub version: String,
}

impl fmt::Display for CatalogueEntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogueError {
    #[error("service {0} already registered")]
    DuplicateService(CatalogueEntryId),
    #[error("invalid descriptor: {}", describe_issues(.0))]
    InvalidDescriptor(Vec<FieldIssue>),
    #[error("service `{name}` not found")]
    NotFound { name: String, version: Option<String> },
    #[error("service {0} is referenced by a defined workflow")]
    InUse(CatalogueEntryId),
}

fn describe_issues(issues: &[FieldIssue]) -> String {
    let parts: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.reason)).collect();
    parts.join("; ")
}

/// Filter for [`Catalogue::list`]; every present criterion must match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceFilter {
    #[serde(default)]
    pub kind: Option<ServiceKind>,
    #[serde(default)]
    pub tag: Option<String>,
    /// Substring of name or description.
    #[serde(default)]
    pub text: Option<String>,
}

impl ServiceFilter {
    pub fn matches(&self, d: &ServiceDescriptor) -> bool {
        self.kind.is_none_or(|k| d.kind == k)
            && self.tag.as_ref().is_none_or(|t| d.tags.contains(t))
            && self
                .text
                .as_ref()
                .is_none_or(|t| d.name.contains(t.as_str()) || d.description.contains(t.as_str()))
    }
}

/// Anything that can resolve a service reference to a descriptor.
pub trait ServiceResolver {
    fn resolve(&self, name: &str, version: Option<&str>) -> Option<&ServiceDescriptor>;
}

/// In-memory catalogue index keyed by name, then semantic version.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalogue {
    entries: BTreeMap<String, BTreeMap<Version, ServiceDescriptor>>,
}

impl Catalogue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Validates without inserting; used by persistence layers to check before journaling.
    pub fn check_register(&self, descriptor: &ServiceDescriptor) -> Result<Version, CatalogueError> {
        let version = descriptor.validate().map_err(CatalogueError::InvalidDescriptor)?;
        if self.entries.get(&descriptor.name).is_some_and(|v| v.contains_key(&version)) {
            return Err(CatalogueError::DuplicateService(descriptor.entry_id()));
        }
        Ok(version)
    }

    pub fn register(&mut self, descriptor: ServiceDescriptor) -> Result<CatalogueEntryId, CatalogueError> {
        let version = self.check_register(&descriptor)?;
        let id = descriptor.entry_id();
        self.entries.entry(descriptor.name.clone()).or_default().insert(version, descriptor);
        Ok(id)
    }

    /// Exact lookup, or the highest semantic version when `version` is `None`.
    pub fn get(&self, name: &str, version: Option<&str>) -> Result<&ServiceDescriptor, CatalogueError> {
        let not_found = || CatalogueError::NotFound { name: name.to_string(), version: version.map(String::from) };
        let versions = self.entries.get(name).ok_or_else(not_found)?;
        match version {
            None => versions.values().next_back().ok_or_else(not_found),
            Some(v) => {
                let v = Version::parse(v).map_err(|_| not_found())?;
                versions.get(&v).ok_or_else(not_found)
            }
        }
    }

    /// Matching descriptors ordered by (name, semantic version).
    pub fn list(&self, filter: &ServiceFilter) -> Vec<&ServiceDescriptor> {
        self.entries.values().flat_map(BTreeMap::values).filter(|d| filter.matches(d)).collect()
    }

    /// Removes an entry unless `in_use` reports a reference to it.
    pub fn unregister(
        &mut self,
        name: &str,
        version: &str,
        in_use: impl FnOnce(&ServiceDescriptor) -> bool,
    ) -> Result<ServiceDescriptor, CatalogueError> {
        let descriptor = self.get(name, Some(version))?;
        if in_use(descriptor) {
            return Err(CatalogueError::InUse(descriptor.entry_id()));
        }
        let key = Version::parse(&descriptor.version).expect("stored versions are valid");
        let versions = self.entries.get_mut(name).expect("entry exists");
        let removed = versions.remove(&key).expect("entry exists");
        if versions.is_empty() {
            self.entries.remove(name);
        }
        Ok(removed)
    }
}

impl ServiceResolver for Catalogue {
    fn resolve(&self, name: &str, version: Option<&str>) -> Option<&ServiceDescriptor> {
        self.get(name, version).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn indexer(version: &str) -> ServiceDescriptor {
        let mut d = ServiceDescriptor::new("string-indexer", version, ServiceKind::Processor);
        d.description = String::from("encode labels as indices");
        d.params = vec![ParamSpec::required("columns", ParamType::String)];
        d
    }

    #[test]
    fn register_then_list() {
        let mut c = Catalogue::new();
        let id = c.register(indexer("1.0.0")).unwrap();
        assert_eq!(id.to_string(), "string-indexer@1.0.0");
        assert_eq!(c.list(&ServiceFilter::default()).len(), 1);
    }

    #[test]
    fn duplicate_is_rejected_and_state_unchanged() {
        let mut c = Catalogue::new();
        c.register(indexer("1.0.0")).unwrap();
        let before = c.clone();
        assert!(matches!(c.register(indexer("1.0.0")), Err(CatalogueError::DuplicateService(_))));
        assert_eq!(c, before);
    }

    #[test]
    fn bad_name_reports_name_field() {
        let mut c = Catalogue::new();
        let d = ServiceDescriptor::new("BadName", "1.0.0", ServiceKind::Task);
        match c.register(d) {
            Err(CatalogueError::InvalidDescriptor(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].field, "name");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(c.is_empty());
    }

    #[test]
    fn param_invariants() {
        let mut d = indexer("1.0.0");
        d.params.push(ParamSpec { required: false, ..ParamSpec::required("window", ParamType::Int) });
        d.params.push(ParamSpec::optional("mode", ParamType::Enum, "fast").with_allowed(&["slow"]));
        d.params.push(ParamSpec::required("columns", ParamType::String));
        let issues = d.validate().unwrap_err();
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["params[1]", "params[2]", "params[3]"]);
    }

    #[test]
    fn latest_version_by_semver_not_lexicographic() {
        let mut c = Catalogue::new();
        for v in ["1.0.0", "1.10.0", "1.2.0", "1.2.0-rc.1"] {
            c.register(indexer(v)).unwrap();
        }
        assert_eq!(c.get("string-indexer", None).unwrap().version, "1.10.0");
        assert_eq!(c.get("string-indexer", Some("1.2.0")).unwrap().version, "1.2.0");
        assert!(matches!(c.get("missing", None), Err(CatalogueError::NotFound { .. })));
        assert!(matches!(c.get("string-indexer", Some("x")), Err(CatalogueError::NotFound { .. })));
    }

    #[test]
    fn unregister_guard_and_repeat() {
        let mut c = Catalogue::new();
        c.register(indexer("1.0.0")).unwrap();
        assert!(matches!(c.unregister("string-indexer", "1.0.0", |_| true), Err(CatalogueError::InUse(_))));
        assert_eq!(c.len(), 1);
        c.unregister("string-indexer", "1.0.0", |_| false).unwrap();
        assert!(c.get("string-indexer", Some("1.0.0")).is_err());
        assert!(matches!(
            c.unregister("string-indexer", "1.0.0", |_| false),
            Err(CatalogueError::NotFound { .. })
        ));
    }

    #[test]
    fn enum_coercion_is_exact() {
        let p = ParamSpec::optional("mode", ParamType::Enum, "fast").with_allowed(&["fast", "slow"]);
        assert_eq!(p.coerce("slow"), Some(Value::Str("slow".into())));
        assert_eq!(p.coerce("Slow"), None);
    }
}
