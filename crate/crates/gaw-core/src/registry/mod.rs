//! Tool registry: structured descriptors for the built-in analytics,
//! schema-validated invocation, size-budgeted result distillation, and a
//! line-delimited JSON-RPC server exposing the catalog.

pub mod builtin;
pub mod distill;
pub mod server;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::values::{ToolValue, ValueKind};

pub use builtin::builtin_registry;
pub use distill::{
    distill, Budget, DistillDirective, DistillProvenance, DistilledResult, DEFAULT_MAX_CHARS,
    DEFAULT_MAX_ITEMS,
};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("tool already registered: {0}")]
    DuplicateTool(String),
    #[error("invalid descriptor: {0}")]
    DescriptorInvalid(String),
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("tool {tool} failed: {message}")]
    ExecutorError { tool: String, message: String },
    #[error("distillation mode {mode} incompatible with {kind}")]
    ModeMismatch { mode: String, kind: ValueKind },
    #[error("transport: {0}")]
    TransportError(String),
}

impl RegistryError {
    /// Application-level wire code. Registration-time and directive errors
    /// surface as schema violations when they cross the protocol boundary.
    pub fn wire_code(&self) -> i64 {
        match self {
            RegistryError::UnknownTool(_) => 1001,
            RegistryError::ConstraintViolation(_) => 1003,
            RegistryError::ExecutorError { .. } => 1004,
            _ => 1002,
        }
    }
}

/// A scalar argument to a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Bool(_) => "Bool",
            ParamValue::Int(_) => "Int",
            ParamValue::Float(_) => "Float",
            ParamValue::Str(_) => "Str",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        match self {
            ParamValue::Int(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

/// `Display` through the JSON encoding keeps error messages unambiguous
/// about what exactly was supplied (strings keep their quotes).
impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamType {
    Bool,
    Int,
    Float,
    Str,
}

/// Closed or open numeric interval for parameter validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub lo_open: bool,
    #[serde(default)]
    pub hi_open: bool,
}

impl ParamRange {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_open: false, hi_open: false }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_open: true, hi_open: true }
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo_open { x > self.lo } else { x >= self.lo };
        let hi_ok = if self.hi_open { x < self.hi } else { x <= self.hi };
        lo_ok && hi_ok
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_open { "(" } else { "[" };
        let close = if self.hi_open { ")" } else { "]" };
        write!(f, "{open}{}, {}{close}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ParamType,
    /// Numeric domain; only meaningful for Int/Float parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<ParamRange>,
    /// Admissible values for Str parameters (the string analogue of range).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Filled in when the caller omits the parameter; None marks the
    /// parameter as optional with absence visible to the executor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotConstraint {
    DirectedRequired,
    WeightedRequired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSlot {
    pub name: String,
    pub kind: ValueKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<SlotConstraint>,
}

/// Structured interface of one analytical capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    /// Knowledge-base family id the tool belongs to.
    pub family: String,
    pub description: String,
    pub inputs: Vec<InputSlot>,
    pub params: Vec<ParamSpec>,
    pub output_kind: ValueKind,
    pub execution_notes: String,
}

impl ToolDescriptor {
    pub fn slot(&self, name: &str) -> Option<&InputSlot> {
        self.inputs.iter().find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationRequest {
    pub tool: String,
    #[serde(default)]
    pub inputs: BTreeMap<String, ToolValue>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultStats {
    pub item_count: usize,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub kind: ValueKind,
    pub stats: ResultStats,
    pub payload: ToolValue,
}

impl RawResult {
    pub fn new(payload: ToolValue) -> Self {
        let bytes = serde_json::to_vec(&payload).expect("tool values serialize");
        Self {
            kind: payload.kind(),
            stats: ResultStats { item_count: payload.item_count(), payload_bytes: bytes.len() },
            payload,
        }
    }
}

pub type ToolExecutor = Box<
    dyn Fn(&BTreeMap<String, ToolValue>, &BTreeMap<String, ParamValue>) -> Result<ToolValue, String>
        + Send
        + Sync,
>;

/// Immutable-after-startup catalog of tools. Invocations borrow the
/// registry shared and may run concurrently.
#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, (ToolDescriptor, ToolExecutor)>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        executor: ToolExecutor,
    ) -> Result<(), RegistryError> {
        validate_descriptor(&descriptor)?;
        if self.tools.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateTool(descriptor.name));
        }
        self.tools.insert(descriptor.name.clone(), (descriptor, executor));
        Ok(())
    }

    /// Catalog in deterministic (name) order.
    pub fn describe_all(&self) -> Vec<&ToolDescriptor> {
        self.tools.values().map(|(d, _)| d).collect()
    }

    pub fn describe(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name).map(|(d, _)| d)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Validates the request against the descriptor, then dispatches.
    pub fn invoke(&self, request: &InvocationRequest) -> Result<RawResult, RegistryError> {
        let (descriptor, executor) = self
            .tools
            .get(&request.tool)
            .ok_or_else(|| RegistryError::UnknownTool(request.tool.clone()))?;
        let kinds: BTreeMap<String, ValueKind> = request
            .inputs
            .iter()
            .map(|(name, v)| (name.clone(), v.kind()))
            .collect();
        let effective = validate_call(descriptor, &kinds, &request.params)?;
        for slot in &descriptor.inputs {
            if slot.constraints.is_empty() {
                continue;
            }
            let ToolValue::Graph { graph } = &request.inputs[&slot.name] else {
                continue;
            };
            for c in &slot.constraints {
                match c {
                    SlotConstraint::DirectedRequired if !graph.directed => {
                        return Err(RegistryError::ConstraintViolation(format!(
                            "slot {}: tool {} requires a directed graph",
                            slot.name, descriptor.name
                        )));
                    }
                    SlotConstraint::WeightedRequired if !graph.is_weighted() => {
                        return Err(RegistryError::ConstraintViolation(format!(
                            "slot {}: tool {} requires edge weights",
                            slot.name, descriptor.name
                        )));
                    }
                    _ => {}
                }
            }
        }
        let payload = executor(&request.inputs, &effective).map_err(|message| {
            RegistryError::ExecutorError { tool: descriptor.name.clone(), message }
        })?;
        if payload.kind() != descriptor.output_kind {
            return Err(RegistryError::ExecutorError {
                tool: descriptor.name.clone(),
                message: format!(
                    "executor returned {}, descriptor declares {}",
                    payload.kind(),
                    descriptor.output_kind
                ),
            });
        }
        Ok(RawResult::new(payload))
    }
}

fn validate_descriptor(d: &ToolDescriptor) -> Result<(), RegistryError> {
    if d.name.is_empty() {
        return Err(RegistryError::DescriptorInvalid("empty tool name".into()));
    }
    let mut slot_names: Vec<&str> = d.inputs.iter().map(|s| s.name.as_str()).collect();
    slot_names.sort_unstable();
    if slot_names.windows(2).any(|w| w[0] == w[1]) {
        return Err(RegistryError::DescriptorInvalid(format!(
            "{}: duplicate slot name",
            d.name
        )));
    }
    for slot in &d.inputs {
        if !slot.constraints.is_empty() && slot.kind != ValueKind::Graph {
            return Err(RegistryError::DescriptorInvalid(format!(
                "{}: slot {} declares graph constraints on kind {}",
                d.name, slot.name, slot.kind
            )));
        }
    }
    let mut param_names: Vec<&str> = d.params.iter().map(|p| p.name.as_str()).collect();
    param_names.sort_unstable();
    if param_names.windows(2).any(|w| w[0] == w[1]) {
        return Err(RegistryError::DescriptorInvalid(format!(
            "{}: duplicate param name",
            d.name
        )));
    }
    for p in &d.params {
        if let Some(default) = &p.default {
            check_param_value(&d.name, p, default)
                .map_err(|e| RegistryError::DescriptorInvalid(format!("default {e}")))?;
        }
    }
    Ok(())
}

/// Type, range, and choice check for one supplied parameter value.
fn check_param_value(tool: &str, spec: &ParamSpec, value: &ParamValue) -> Result<(), String> {
    let type_ok = matches!(
        (spec.param_type, value),
        (ParamType::Bool, ParamValue::Bool(_))
            | (ParamType::Int, ParamValue::Int(_))
            | (ParamType::Float, ParamValue::Float(_))
            | (ParamType::Float, ParamValue::Int(_))
            | (ParamType::Str, ParamValue::Str(_))
    );
    if !type_ok {
        return Err(format!(
            "param {} of {tool}: expected {:?}, given {} ({})",
            spec.name,
            spec.param_type,
            value,
            value.type_name()
        ));
    }
    if let Some(range) = &spec.range {
        let x = value.as_f64().expect("numeric after type check");
        if !range.contains(x) {
            return Err(format!(
                "param {} of {tool}: {value} outside {range}",
                spec.name
            ));
        }
    }
    if let Some(choices) = &spec.choices {
        let s = value.as_str().expect("choices imply Str type");
        if !choices.iter().any(|c| c == s) {
            return Err(format!(
                "param {} of {tool}: {value} not one of {choices:?}",
                spec.name
            ));
        }
    }
    Ok(())
}

/// Shared schema check used by direct invocation and by DAG validation:
/// verifies slot presence and kinds plus parameter types/ranges, and
/// returns the effective parameter map with declared defaults filled in.
pub fn validate_call(
    descriptor: &ToolDescriptor,
    input_kinds: &BTreeMap<String, ValueKind>,
    params: &BTreeMap<String, ParamValue>,
) -> Result<BTreeMap<String, ParamValue>, RegistryError> {
    for slot in &descriptor.inputs {
        match input_kinds.get(&slot.name) {
            None => {
                return Err(RegistryError::SchemaViolation(format!(
                    "slot {} of {}: missing (expected {})",
                    slot.name, descriptor.name, slot.kind
                )))
            }
            Some(kind) if *kind != slot.kind => {
                return Err(RegistryError::SchemaViolation(format!(
                    "slot {} of {}: expected {}, given {}",
                    slot.name, descriptor.name, slot.kind, kind
                )))
            }
            Some(_) => {}
        }
    }
    for name in input_kinds.keys() {
        if descriptor.slot(name).is_none() {
            return Err(RegistryError::SchemaViolation(format!(
                "slot {name}: not declared by {}",
                descriptor.name
            )));
        }
    }
    let mut effective = BTreeMap::new();
    for (name, value) in params {
        let spec = descriptor.param(name).ok_or_else(|| {
            RegistryError::SchemaViolation(format!(
                "param {name}: not declared by {}",
                descriptor.name
            ))
        })?;
        check_param_value(&descriptor.name, spec, value).map_err(RegistryError::SchemaViolation)?;
        effective.insert(name.clone(), value.clone());
    }
    for spec in &descriptor.params {
        if !effective.contains_key(&spec.name) {
            if let Some(default) = &spec.default {
                effective.insert(spec.name.clone(), default.clone());
            }
        }
    }
    Ok(effective)
}

/// Checks a single named parameter against a descriptor, for callers that
/// want every violation rather than the first.
pub fn check_param(
    descriptor: &ToolDescriptor,
    name: &str,
    value: &ParamValue,
) -> Result<(), RegistryError> {
    let spec = descriptor.param(name).ok_or_else(|| {
        RegistryError::SchemaViolation(format!(
            "param {name}: not declared by {}",
            descriptor.name
        ))
    })?;
    check_param_value(&descriptor.name, spec, value).map_err(RegistryError::SchemaViolation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_descriptor() -> ToolDescriptor {
        ToolDescriptor {
            name: "toy".into(),
            family: "f.toy".into(),
            description: "toy tool".into(),
            inputs: vec![InputSlot {
                name: "graph".into(),
                kind: ValueKind::Graph,
                constraints: vec![],
            }],
            params: vec![ParamSpec {
                name: "alpha".into(),
                param_type: ParamType::Float,
                range: Some(ParamRange::open(0.0, 1.0)),
                choices: None,
                default: Some(ParamValue::Float(0.5)),
            }],
            output_kind: ValueKind::Scalar,
            execution_notes: String::new(),
        }
    }

    #[test]
    fn register_rejects_duplicates_and_bad_defaults() {
        let mut reg = ToolRegistry::new();
        reg.register(toy_descriptor(), Box::new(|_, _| Ok(ToolValue::Scalar { value: 1.into() })))
            .unwrap();
        let err = reg
            .register(toy_descriptor(), Box::new(|_, _| Ok(ToolValue::Scalar { value: 1.into() })))
            .unwrap_err();
        assert!(matches!(err, RegistryError::DuplicateTool(_)));

        let mut bad = toy_descriptor();
        bad.name = "toy2".into();
        bad.params[0].default = Some(ParamValue::Float(1.5));
        let err = reg
            .register(bad, Box::new(|_, _| Ok(ToolValue::Scalar { value: 1.into() })))
            .unwrap_err();
        assert!(matches!(err, RegistryError::DescriptorInvalid(_)));
    }

    #[test]
    fn validate_call_fills_defaults_and_names_offenders() {
        let d = toy_descriptor();
        let kinds: BTreeMap<String, ValueKind> =
            [("graph".to_string(), ValueKind::Graph)].into_iter().collect();
        let effective = validate_call(&d, &kinds, &BTreeMap::new()).unwrap();
        assert_eq!(effective["alpha"], ParamValue::Float(0.5));

        let err = validate_call(&d, &BTreeMap::new(), &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("slot graph"), "{err}");

        let bad_kinds: BTreeMap<String, ValueKind> =
            [("graph".to_string(), ValueKind::Table)].into_iter().collect();
        let err = validate_call(&d, &bad_kinds, &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("expected Graph, given Table"), "{err}");

        let mut params = BTreeMap::new();
        params.insert("alpha".to_string(), ParamValue::Float(1.5));
        let err = validate_call(&d, &kinds, &params).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn param_range_endpoints_respect_openness() {
        let open = ParamRange::open(0.0, 1.0);
        assert!(!open.contains(0.0));
        assert!(!open.contains(1.0));
        assert!(open.contains(0.5));
        let closed = ParamRange::closed(2.0, 8.0);
        assert!(closed.contains(2.0));
        assert!(closed.contains(8.0));
        assert!(!closed.contains(8.1));
    }

    #[test]
    fn wire_codes_cover_the_application_errors() {
        assert_eq!(RegistryError::UnknownTool("x".into()).wire_code(), 1001);
        assert_eq!(RegistryError::SchemaViolation("x".into()).wire_code(), 1002);
        assert_eq!(RegistryError::ConstraintViolation("x".into()).wire_code(), 1003);
        assert_eq!(
            RegistryError::ExecutorError { tool: "t".into(), message: "m".into() }.wire_code(),
            1004
        );
    }
}
