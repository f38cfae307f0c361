use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{WorkflowDefinition, WorkflowMode};
use crate::catalogue::{ServiceDescriptor, ServiceKind, ServiceResolver};
use crate::value::Value;

/// A definition whose nodes resolved against the catalogue with typed bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedWorkflow {
    pub definition: WorkflowDefinition,
    pub resolved: BTreeMap<String, ServiceDescriptor>,
    /// Coerced bindings per node id, with defaults filled for unbound optional params.
    pub bindings: BTreeMap<String, BTreeMap<String, Value>>,
}

impl ValidatedWorkflow {
    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn mode(&self) -> WorkflowMode {
        self.definition.mode
    }

    pub fn descriptor(&self, node: &str) -> &ServiceDescriptor {
        &self.resolved[node]
    }

    pub fn node_bindings(&self, node: &str) -> &BTreeMap<String, Value> {
        &self.bindings[node]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("invalid definition: {0}")]
    InvalidDefinition(String),
    #[error("node `{node}`: unknown service `{service}`")]
    UnknownService { node: String, service: String, version: Option<String> },
    #[error("node `{node}`: expected a {expected} service, `{service}` is a {actual}")]
    KindMismatch { node: String, service: String, expected: ServiceKind, actual: ServiceKind },
    #[error("node `{node}`: missing required parameter `{param}`")]
    MissingRequiredParam { node: String, param: String },
    #[error("node `{node}`: service has no parameter `{param}`")]
    UnknownParam { node: String, param: String },
    #[error("node `{node}`: `{value}` is not a valid value for parameter `{param}`")]
    BindingTypeError { node: String, param: String, value: String },
}

impl ValidationError {
    pub fn node(&self) -> Option<&str> {
        match self {
            ValidationError::InvalidDefinition(_) => None,
            ValidationError::UnknownService { node, .. }
            | ValidationError::KindMismatch { node, .. }
            | ValidationError::MissingRequiredParam { node, .. }
            | ValidationError::UnknownParam { node, .. }
            | ValidationError::BindingTypeError { node, .. } => Some(node),
        }
    }
}

fn expected_kind(mode: WorkflowMode, index: usize, count: usize) -> ServiceKind {
    match mode {
        WorkflowMode::Batch => ServiceKind::Task,
        WorkflowMode::Stream if index == 0 => ServiceKind::Source,
        WorkflowMode::Stream if index + 1 == count => ServiceKind::Sink,
        WorkflowMode::Stream => ServiceKind::Processor,
    }
}

/// Resolves every node, enforces kind rules per mode and coerces bindings.
/// Reports the first failing node in definition order.
pub fn validate(
    def: &WorkflowDefinition,
    catalogue: &impl ServiceResolver,
) -> Result<ValidatedWorkflow, ValidationError> {
    def.check().map_err(ValidationError::InvalidDefinition)?;
    let mut resolved = BTreeMap::new();
    let mut bindings = BTreeMap::new();
    for (i, node) in def.nodes.iter().enumerate() {
        let descriptor = catalogue.resolve(&node.service, node.version.as_deref()).ok_or_else(|| {
            ValidationError::UnknownService {
                node: node.id.clone(),
                service: node.service.clone(),
                version: node.version.clone(),
            }
        })?;
        let expected = expected_kind(def.mode, i, def.nodes.len());
        if descriptor.kind != expected {
            return Err(ValidationError::KindMismatch {
                node: node.id.clone(),
                service: node.service.clone(),
                expected,
                actual: descriptor.kind,
            });
        }
        if let Some(param) = node.bindings.keys().find(|k| descriptor.param(k).is_none()) {
            return Err(ValidationError::UnknownParam { node: node.id.clone(), param: param.clone() });
        }
        let mut typed = BTreeMap::new();
        for spec in &descriptor.params {
            let value = match node.bindings.get(&spec.name) {
                Some(literal) => spec.coerce(literal).ok_or_else(|| ValidationError::BindingTypeError {
                    node: node.id.clone(),
                    param: spec.name.clone(),
                    value: literal.clone(),
                })?,
                None => match spec.typed_default() {
                    Some(d) => d,
                    None => {
                        return Err(ValidationError::MissingRequiredParam {
                            node: node.id.clone(),
                            param: spec.name.clone(),
                        })
                    }
                },
            };
            typed.insert(spec.name.clone(), value);
        }
        resolved.insert(node.id.clone(), descriptor.clone());
        bindings.insert(node.id.clone(), typed);
    }
    Ok(ValidatedWorkflow { definition: def.clone(), resolved, bindings })
}

/// Node ids of `def` whose reference resolves to `descriptor` in `catalogue`.
pub fn references<'a>(
    def: &'a WorkflowDefinition,
    catalogue: &impl ServiceResolver,
    descriptor: &ServiceDescriptor,
) -> Vec<&'a str> {
    def.nodes
        .iter()
        .filter(|n| n.service == descriptor.name)
        .filter(|n| {
            catalogue
                .resolve(&n.service, n.version.as_deref())
                .is_some_and(|d| d.version == descriptor.version)
        })
        .map(|n| n.id.as_str())
        .collect()
}
