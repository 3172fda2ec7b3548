//! Rule-based consistency check of a candidate outcome against the schemas
//! that were in the model's context: the function must exist, argument keys
//! must be declared with every required one present, and every value must
//! have the declared kind.

use serde::{Deserialize, Serialize};

use crate::callgrammar::ParseOutcome;
use crate::schema::{ParamType, ToolDefinition, ToolInvocation, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    UnknownFunction {
        name: String,
    },
    UnknownArgKey {
        function: String,
        key: String,
    },
    MissingRequired {
        function: String,
        key: String,
    },
    TypeMismatch {
        function: String,
        key: String,
        expected: ParamType,
        got: ValueKind,
    },
    NullOutcome,
}

impl FailureReason {
    fn type_mismatch(function: &str, key: &str, expected: ParamType, got: ValueKind) -> Self {
        FailureReason::TypeMismatch {
            function: function.to_string(),
            key: key.to_string(),
            expected,
            got,
        }
    }
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::UnknownFunction { name } => write!(f, "unknown function `{name}`"),
            FailureReason::UnknownArgKey { function, key } => {
                write!(f, "`{function}` has no parameter `{key}`")
            }
            FailureReason::MissingRequired { function, key } => {
                write!(f, "`{function}` is missing required `{key}`")
            }
            FailureReason::TypeMismatch {
                function,
                key,
                expected,
                got,
            } => write!(f, "`{function}.{key}` expects {expected}, got {got}"),
            FailureReason::NullOutcome => f.write_str("no parsable call"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallReport {
    pub function: String,
    pub reasons: Vec<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub reasons: Vec<FailureReason>,
    #[serde(default)]
    pub per_call: Vec<CallReport>,
}

impl ValidationReport {
    fn null() -> Self {
        Self {
            valid: false,
            reasons: vec![FailureReason::NullOutcome],
            per_call: Vec::new(),
        }
    }
}

/// Reasons a single call violates `schemas`, in a fixed order: unknown
/// function (which short-circuits), then per argument in call order an
/// unknown key or a kind mismatch, then missing required parameters in
/// declaration order.
pub fn check_call(call: &ToolInvocation, schemas: &[ToolDefinition]) -> Vec<FailureReason> {
    let Some(tool) = schemas.iter().find(|t| t.name == call.name) else {
        return vec![FailureReason::UnknownFunction {
            name: call.name.clone(),
        }];
    };
    let mut reasons = Vec::new();
    for (key, value) in &call.args {
        let Some(param) = tool.param(key) else {
            reasons.push(FailureReason::UnknownArgKey {
                function: call.name.clone(),
                key: key.clone(),
            });
            continue;
        };
        let kind = value.kind();
        let ok = match kind {
            ValueKind::Null => param.ty == ParamType::Any || !param.required,
            kind => param.ty.accepts(kind),
        };
        if !ok {
            reasons.push(FailureReason::type_mismatch(
                &call.name, key, param.ty, kind,
            ));
        }
    }
    for param in tool.params.iter().filter(|p| p.required) {
        if !call.args.contains_key(&param.name) {
            reasons.push(FailureReason::MissingRequired {
                function: call.name.clone(),
                key: param.name.clone(),
            });
        }
    }
    reasons
}

pub fn check(outcome: &ParseOutcome, schemas: &[ToolDefinition]) -> ValidationReport {
    let calls = match outcome.calls() {
        Some(list) if !list.is_null() => &list.calls,
        _ => return ValidationReport::null(),
    };
    let per_call: Vec<CallReport> = calls
        .iter()
        .map(|call| CallReport {
            function: call.name.clone(),
            reasons: check_call(call, schemas),
        })
        .collect();
    let reasons: Vec<FailureReason> = per_call.iter().flat_map(|c| c.reasons.clone()).collect();
    ValidationReport {
        valid: reasons.is_empty(),
        reasons,
        per_call,
    }
}

/// Keeps the outcomes whose report is valid against their own group's
/// schemas, in input order.
pub fn filter_valid<S>(
    outcomes: &[(usize, ParseOutcome)],
    schemas_for: S,
) -> Vec<(usize, &ParseOutcome)>
where
    S: Fn(usize) -> Vec<ToolDefinition>,
{
    outcomes
        .iter()
        .filter(|(group, outcome)| check(outcome, &schemas_for(*group)).valid)
        .map(|(group, outcome)| (*group, outcome))
        .collect()
}
