//! Tool and invocation domain types, plus ingestion of tool libraries from
//! the BFCL-compatible JSON interchange format.
//!
//! A library file is a JSON array of objects shaped like
//!
//! ```json
//! {"name": "get_weather",
//!  "description": "Weather forecast for a city",
//!  "parameters": {"type": "dict",
//!                 "properties": {"city": {"type": "string", "description": "City name"}},
//!                 "required": ["city"]}}
//! ```

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed tool library JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("duplicate tool name `{0}`")]
    DuplicateTool(String),
    #[error("tool `{tool}` parameter `{param}` has unknown type `{keyword}`")]
    UnknownType {
        tool: String,
        param: String,
        keyword: String,
    },
    #[error("tool `{tool}`: {detail}")]
    InvalidTool { tool: String, detail: String },
}

/// Declared kind of a tool parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Integer,
    Float,
    Boolean,
    Array,
    Object,
    Any,
}

impl ParamType {
    /// Maps a JSON-schema style type keyword onto a kind.
    pub fn from_keyword(keyword: &str) -> Option<Self> {
        Some(match keyword {
            "string" => ParamType::String,
            "integer" => ParamType::Integer,
            "float" | "number" => ParamType::Float,
            "boolean" => ParamType::Boolean,
            "array" | "tuple" => ParamType::Array,
            "object" | "dict" => ParamType::Object,
            "any" => ParamType::Any,
            _ => return None,
        })
    }

    /// Keyword written by [`render_library`].
    pub fn keyword(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Float => "float",
            ParamType::Boolean => "boolean",
            ParamType::Array => "array",
            ParamType::Object => "dict",
            ParamType::Any => "any",
        }
    }

    /// Whether a value of kind `kind` satisfies this declared type.
    ///
    /// Integers satisfy `float`; floats never satisfy `integer`. `null` is
    /// handled by the caller since its legality depends on the required flag.
    pub fn accepts(self, kind: ValueKind) -> bool {
        match self {
            ParamType::Any => true,
            ParamType::String => kind == ValueKind::Text,
            ParamType::Integer => kind == ValueKind::Integer,
            ParamType::Float => matches!(kind, ValueKind::Integer | ValueKind::Float),
            ParamType::Boolean => kind == ValueKind::Boolean,
            ParamType::Array => kind == ValueKind::List,
            ParamType::Object => kind == ValueKind::Map,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamType::Object => "object",
            other => other.keyword(),
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub description: String,
    pub required: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, ty: ParamType, required: bool) -> Self {
        Self {
            name: name.into(),
            ty,
            description: String::new(),
            required,
        }
    }

    pub fn describe(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// One callable tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl ToolDefinition {
    /// Builds a definition, checking the name grammar and parameter uniqueness.
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        params: Vec<ParamSpec>,
    ) -> Result<Self, SchemaError> {
        let tool = Self {
            name: name.into(),
            description: description.into(),
            params,
        };
        tool.check()?;
        Ok(tool)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    fn check(&self) -> Result<(), SchemaError> {
        if !is_dotted_ident(&self.name) {
            return Err(self.invalid(format!("name `{}` is not a dotted identifier", self.name)));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.params {
            if !is_ident(&p.name) {
                return Err(
                    self.invalid(format!("parameter name `{}` is not an identifier", p.name))
                );
            }
            if !seen.insert(p.name.as_str()) {
                return Err(self.invalid(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(())
    }

    fn invalid(&self, detail: String) -> SchemaError {
        SchemaError::InvalidTool {
            tool: self.name.clone(),
            detail,
        }
    }
}

/// Ordered set of tools with a name index.
#[derive(Debug, Clone, Default)]
pub struct ToolLibrary {
    tools: Vec<ToolDefinition>,
    index: HashMap<String, usize>,
}

impl PartialEq for ToolLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.tools == other.tools
    }
}

impl ToolLibrary {
    pub fn new(tools: Vec<ToolDefinition>) -> Result<Self, SchemaError> {
        let mut index = HashMap::with_capacity(tools.len());
        for (pos, tool) in tools.iter().enumerate() {
            tool.check()?;
            if index.insert(tool.name.clone(), pos).is_some() {
                return Err(SchemaError::DuplicateTool(tool.name.clone()));
            }
        }
        Ok(Self { tools, index })
    }

    pub fn tools(&self) -> &[ToolDefinition] {
        &self.tools
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, pos: usize) -> Option<&ToolDefinition> {
        self.tools.get(pos)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&ToolDefinition> {
        self.position(name).map(|p| &self.tools[p])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(|t| t.name.as_str())
    }

    /// Sub-library made of the given positions, in the given order.
    ///
    /// Panics if a position is out of range or repeated.
    pub fn subset(&self, positions: &[usize]) -> ToolLibrary {
        let tools = positions.iter().map(|&p| self.tools[p].clone()).collect();
        ToolLibrary::new(tools).expect("subset of a valid library is valid")
    }

    pub fn into_tools(self) -> Vec<ToolDefinition> {
        self.tools
    }
}

/// Argument value of a tool invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
    List(Vec<Value>),
    Map(IndexMap<String, Value>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Integer,
    Float,
    Boolean,
    Null,
    List,
    Map,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Text => "text",
            ValueKind::Integer => "integer",
            ValueKind::Float => "float",
            ValueKind::Boolean => "boolean",
            ValueKind::Null => "null",
            ValueKind::List => "list",
            ValueKind::Map => "map",
        };
        f.write_str(s)
    }
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Integer,
            Value::Float(_) => ValueKind::Float,
            Value::Bool(_) => ValueKind::Boolean,
            Value::Null => ValueKind::Null,
            Value::List(_) => ValueKind::List,
            Value::Map(_) => ValueKind::Map,
        }
    }

    /// Structural equality where integers and floats compare by exact
    /// numeric magnitude (`3 == 3.0`, `3 != 3.5`).
    pub fn coerced_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => {
                int_float_eq(*a, *b)
            }
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.coerced_eq(y))
            }
            (Value::Map(a), Value::Map(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .all(|(k, v)| b.get(k).is_some_and(|w| v.coerced_eq(w)))
            }
            _ => self == other,
        }
    }

    /// Converts a JSON value. Integral JSON numbers that fit `i64` become
    /// `Int`; every other number becomes `Float`.
    pub fn from_json(json: &serde_json::Value) -> Value {
        match json {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
            },
            serde_json::Value::String(s) => Value::Text(s.clone()),
            serde_json::Value::Array(items) => {
                Value::List(items.iter().map(Value::from_json).collect())
            }
            serde_json::Value::Object(map) => Value::Map(
                map.iter()
                    .map(|(k, v)| (k.clone(), Value::from_json(v)))
                    .collect(),
            ),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Null => serde_json::Value::Null,
            Value::List(items) => {
                serde_json::Value::Array(items.iter().map(Value::to_json).collect())
            }
            Value::Map(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }
}

fn int_float_eq(i: i64, f: f64) -> bool {
    // `i as f64` can round for |i| > 2^53, so compare in the integer domain too.
    f.is_finite() && f.fract() == 0.0 && f == i as f64 && (f as i128) == i as i128
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        serde_json::Value::deserialize(deserializer).map(|v| Value::from_json(&v))
    }
}

/// A single parsed call `(t, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolInvocation {
    pub name: String,
    pub args: IndexMap<String, Value>,
}

impl ToolInvocation {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            args: IndexMap::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: Value) -> Self {
        self.args.insert(key.into(), value);
        self
    }

    /// Same name, same key set and coerced-equal values (argument order ignored).
    pub fn coerced_eq(&self, other: &ToolInvocation) -> bool {
        self.name == other.name
            && self.args.len() == other.args.len()
            && self
                .args
                .iter()
                .all(|(k, v)| other.args.get(k).is_some_and(|w| v.coerced_eq(w)))
    }
}

/// Ordered sequence of calls; the empty list stands for the null outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvocationList {
    pub calls: Vec<ToolInvocation>,
}

impl InvocationList {
    pub fn new(calls: Vec<ToolInvocation>) -> Self {
        Self { calls }
    }

    pub fn is_null(&self) -> bool {
        self.calls.is_empty()
    }

    /// Order-sensitive, call-by-call [`ToolInvocation::coerced_eq`].
    pub fn coerced_eq(&self, other: &InvocationList) -> bool {
        self.calls.len() == other.calls.len()
            && self
                .calls
                .iter()
                .zip(&other.calls)
                .all(|(a, b)| a.coerced_eq(b))
    }
}

impl From<Vec<ToolInvocation>> for InvocationList {
    fn from(calls: Vec<ToolInvocation>) -> Self {
        Self { calls }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_dotted_ident(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(is_ident)
}

// ---------------------------------------------------------------------------
// JSON interchange

#[derive(Deserialize)]
struct RawTool {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    parameters: Option<RawParameters>,
}

#[derive(Deserialize)]
struct RawParameters {
    #[serde(default, deserialize_with = "unique_properties")]
    properties: Vec<(String, RawProperty)>,
    #[serde(default)]
    required: Vec<String>,
}

#[derive(Deserialize)]
struct RawProperty {
    #[serde(rename = "type")]
    ty: String,
    #[serde(default)]
    description: String,
}

/// Reads `properties` in document order, rejecting repeated keys instead of
/// letting the last one win.
fn unique_properties<'de, D>(deserializer: D) -> Result<Vec<(String, RawProperty)>, D::Error>
where
    D: Deserializer<'de>,
{
    struct Props;

    impl<'de> Visitor<'de> for Props {
        type Value = Vec<(String, RawProperty)>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of parameter definitions")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out: Vec<(String, RawProperty)> = Vec::new();
            while let Some((key, prop)) = map.next_entry::<String, RawProperty>()? {
                if out.iter().any(|(k, _)| *k == key) {
                    return Err(de::Error::custom(format!("duplicate parameter `{key}`")));
                }
                out.push((key, prop));
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(Props)
}

fn byte_offset(source: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in source.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(source.len());
        }
        offset += l.len() + 1;
    }
    source.len()
}

fn convert_tool(raw: RawTool) -> Result<ToolDefinition, SchemaError> {
    let mut params = Vec::new();
    let (properties, required) = match raw.parameters {
        Some(p) => (p.properties, p.required),
        None => (Vec::new(), Vec::new()),
    };
    for (pname, prop) in properties {
        let ty = ParamType::from_keyword(&prop.ty).ok_or_else(|| SchemaError::UnknownType {
            tool: raw.name.clone(),
            param: pname.clone(),
            keyword: prop.ty.clone(),
        })?;
        params.push(ParamSpec {
            required: required.contains(&pname),
            name: pname,
            ty,
            description: prop.description,
        });
    }
    if let Some(missing) = required
        .iter()
        .find(|r| !params.iter().any(|p| &p.name == *r))
    {
        return Err(SchemaError::InvalidTool {
            tool: raw.name,
            detail: format!("required parameter `{missing}` is not declared"),
        });
    }
    ToolDefinition::new(raw.name, raw.description, params)
}

/// Parses a JSON array of tool definitions.
pub fn load_library(source: &[u8]) -> Result<ToolLibrary, SchemaError> {
    let raw: Vec<RawTool> = serde_json::from_slice(source).map_err(|e| SchemaError::Parse {
        offset: byte_offset(source, e.line(), e.column()),
        message: e.to_string(),
    })?;
    tools_from_raw(raw)
}

/// Same as [`load_library`] for an already-parsed JSON value.
pub fn library_from_json(json: &serde_json::Value) -> Result<ToolLibrary, SchemaError> {
    let raw: Vec<RawTool> = Vec::<RawTool>::deserialize(json).map_err(|e| SchemaError::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    tools_from_raw(raw)
}

fn tools_from_raw(raw: Vec<RawTool>) -> Result<ToolLibrary, SchemaError> {
    let tools = raw
        .into_iter()
        .map(convert_tool)
        .collect::<Result<Vec<_>, _>>()?;
    ToolLibrary::new(tools)
}

/// JSON value in the interchange shape, preserving tool and parameter order.
pub fn library_to_json(tools: &[ToolDefinition]) -> serde_json::Value {
    let items = tools
        .iter()
        .map(|t| {
            let properties: serde_json::Map<String, serde_json::Value> = t
                .params
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        serde_json::json!({"type": p.ty.keyword(), "description": p.description}),
                    )
                })
                .collect();
            let required: Vec<&str> = t
                .params
                .iter()
                .filter(|p| p.required)
                .map(|p| p.name.as_str())
                .collect();
            serde_json::json!({
                "name": t.name,
                "description": t.description,
                "parameters": {"type": "dict", "properties": properties, "required": required},
            })
        })
        .collect();
    serde_json::Value::Array(items)
}

/// Deterministic single-line JSON rendering; inverse of [`load_library`].
pub fn render_library(lib: &ToolLibrary) -> String {
    render_tools(lib.tools())
}

pub fn render_tools(tools: &[ToolDefinition]) -> String {
    library_to_json(tools).to_string()
}
