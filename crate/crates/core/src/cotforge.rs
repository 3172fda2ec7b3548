//! Chain-of-thought training data construction.
//!
//! For each raw `(query, ground truth)` sample every tool is tried on its
//! own, the consistent ones are kept, and one retry completion runs over the
//! kept tools. When the retry answer equals the ground truth, a templated
//! rationale is written around it:
//!
//! ```text
//! <think>{rationale}</think><tool_call>{calls}</tool_call>
//! ```

use std::io::Write;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::callgrammar::{parse_invocations, serialize_invocations, ParseOutcome};
use crate::llmport::{ChatDefaults, CompletionPort};
use crate::prompts::{self, THINK_CLOSE, THINK_OPEN, TOOL_CALL_CLOSE, TOOL_CALL_OPEN};
use crate::schema::{
    library_from_json, render_library, render_tools, InvocationList, ParamSpec, ParamType,
    SchemaError, ToolDefinition, ToolInvocation, ToolLibrary, Value,
};
use crate::validator::check;

#[derive(Debug, thiserror::Error)]
pub enum CotError {
    #[error("output sink failed after {written} records: {source}")]
    Sink {
        written: usize,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("raw sample {index}: {message}")]
pub struct RawSampleError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub id: String,
    pub query: String,
    pub library: ToolLibrary,
    pub ground_truth: InvocationList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTSample {
    pub id: String,
    pub query: String,
    /// JSON rendering of the full library.
    pub tools: String,
    pub rationale: String,
    pub final_call: InvocationList,
    /// Training target: rationale and final call wrapped in their tags.
    pub target: String,
}

/// One line of the output JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    pub query: String,
    pub tools: String,
    pub target: String,
}

impl From<&CoTSample> for CotRecord {
    fn from(s: &CoTSample) -> Self {
        Self {
            query: s.query.clone(),
            tools: s.tools.clone(),
            target: s.target.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CotOutcome {
    Emitted(CoTSample),
    /// No tool produced a consistent call on its own.
    EmptyValid,
    /// The retry answer differs from the ground truth.
    Mismatch,
    Errored(String),
}

impl CotOutcome {
    pub fn into_sample(self) -> Option<CoTSample> {
        match self {
            CotOutcome::Emitted(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotCounts {
    pub emitted: usize,
    pub skipped_empty_valid: usize,
    pub skipped_mismatch: usize,
    pub errored: usize,
}

pub fn assemble_target(rationale: &str, final_call: &InvocationList) -> String {
    format!(
        "{THINK_OPEN}{rationale}{THINK_CLOSE}{TOOL_CALL_OPEN}{}{TOOL_CALL_CLOSE}",
        serialize_invocations(final_call)
    )
}

/// Inverse of [`assemble_target`]: the rationale and the parsed calls.
pub fn split_target(target: &str) -> Option<(String, InvocationList)> {
    let body = target.strip_prefix(THINK_OPEN)?;
    let (rationale, rest) = body.split_once(THINK_CLOSE)?;
    let calls = rest
        .strip_prefix(TOOL_CALL_OPEN)?
        .strip_suffix(TOOL_CALL_CLOSE)?;
    let list = parse_invocations(calls).into_calls()?;
    Some((rationale.to_string(), list))
}

pub struct CotBuilder {
    port: Arc<dyn CompletionPort>,
    chat: ChatDefaults,
    concurrency: usize,
}

impl CotBuilder {
    pub fn new(port: Arc<dyn CompletionPort>) -> Self {
        Self {
            port,
            chat: ChatDefaults::default(),
            concurrency: 8,
        }
    }

    pub fn with_chat(mut self, chat: ChatDefaults) -> Self {
        self.chat = chat;
        self
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> Self {
        self.concurrency = concurrency.max(1);
        self
    }

    /// Tries `tool` alone. A transport failure counts as a null outcome.
    async fn try_single(&self, query: &str, tool: &ToolDefinition) -> ParseOutcome {
        let tools = std::slice::from_ref(tool);
        let req = self
            .chat
            .request(prompts::try_system(&render_tools(tools)), query);
        match self.port.complete(&req).await {
            Ok(text) => parse_invocations(&text),
            Err(e) => {
                log::debug!("try on `{}` failed: {e}", tool.name);
                ParseOutcome::Null(String::new())
            }
        }
    }

    pub async fn build_cot(&self, sample: &RawSample) -> CotOutcome {
        let tools = sample.library.tools();
        let outcomes: Vec<ParseOutcome> = stream::iter(tools)
            .map(|t| self.try_single(&sample.query, t))
            .buffered(self.concurrency)
            .collect()
            .await;

        let mut candidates: Vec<ToolInvocation> = Vec::new();
        let mut valid: Vec<&ToolDefinition> = Vec::new();
        for (tool, outcome) in tools.iter().zip(&outcomes) {
            if let Some(list) = outcome.calls() {
                candidates.extend(list.calls.iter().cloned());
            }
            if check(outcome, std::slice::from_ref(tool)).valid {
                valid.push(tool);
            }
        }
        if valid.is_empty() {
            return CotOutcome::EmptyValid;
        }

        let retry_tools: Vec<ToolDefinition> = valid.iter().map(|t| (*t).clone()).collect();
        let req = self.chat.request(
            prompts::retry_system(&render_tools(&retry_tools)),
            &sample.query,
        );
        let answer = match self.port.complete(&req).await {
            Ok(text) => parse_invocations(&text),
            Err(e) => {
                log::warn!("sample `{}`: retry failed: {e}", sample.id);
                return CotOutcome::Errored(e.to_string());
            }
        };
        let final_call = match answer.into_calls() {
            Some(list) if list.coerced_eq(&sample.ground_truth) => list,
            _ => return CotOutcome::Mismatch,
        };

        let valid_names: Vec<&str> = valid.iter().map(|t| t.name.as_str()).collect();
        let rationale = prompts::rationale(
            &serialize_invocations(&InvocationList::new(candidates)),
            &valid_names.join(", "),
        );
        CotOutcome::Emitted(CoTSample {
            id: sample.id.clone(),
            query: sample.query.clone(),
            tools: render_library(&sample.library),
            target: assemble_target(&rationale, &final_call),
            rationale,
            final_call,
        })
    }

    /// Builds every sample and writes the emitted ones to `sink` as JSONL,
    /// in input order. Unreadable raw samples count as errored.
    pub async fn build_dataset<I>(
        &self,
        raw: I,
        sink: &mut dyn Write,
    ) -> Result<CotCounts, CotError>
    where
        I: IntoIterator<Item = Result<RawSample, RawSampleError>>,
    {
        let mut counts = CotCounts::default();
        let mut outcomes = stream::iter(raw)
            .map(|item| async move {
                match item {
                    Ok(sample) => self.build_cot(&sample).await,
                    Err(e) => CotOutcome::Errored(e.to_string()),
                }
            })
            .buffered(self.concurrency);
        while let Some(outcome) = outcomes.next().await {
            match outcome {
                CotOutcome::Emitted(sample) => {
                    let line = serde_json::to_string(&CotRecord::from(&sample))
                        .expect("records always serialize");
                    writeln!(sink, "{line}").map_err(|source| CotError::Sink {
                        written: counts.emitted,
                        source,
                    })?;
                    counts.emitted += 1;
                }
                CotOutcome::EmptyValid => counts.skipped_empty_valid += 1,
                CotOutcome::Mismatch => counts.skipped_mismatch += 1,
                CotOutcome::Errored(_) => counts.errored += 1,
            }
        }
        sink.flush().map_err(|source| CotError::Sink {
            written: counts.emitted,
            source,
        })?;
        Ok(counts)
    }
}

// ---------------------------------------------------------------------------
// xlam-style raw corpus

/// Maps an xlam type string (`str`, `List[int]`, `Optional[str]`,
/// `int, optional`, ...) to a kind and whether it marks the parameter optional.
fn xlam_type(raw: &str) -> Option<(ParamType, bool)> {
    let mut t = raw.trim();
    let mut optional = false;
    if let Some(stripped) = t.strip_suffix(", optional") {
        t = stripped.trim();
        optional = true;
    }
    if let Some(inner) = t
        .strip_prefix("Optional[")
        .and_then(|s| s.strip_suffix(']'))
    {
        t = inner.trim();
        optional = true;
    }
    let head = t.split('[').next().unwrap_or(t).trim();
    let ty = match head {
        "str" | "string" => ParamType::String,
        "int" | "integer" => ParamType::Integer,
        "float" | "number" => ParamType::Float,
        "bool" | "boolean" => ParamType::Boolean,
        "List" | "list" | "Tuple" | "tuple" | "Set" | "set" | "array" => ParamType::Array,
        "Dict" | "dict" | "object" => ParamType::Object,
        "Any" | "any" => ParamType::Any,
        _ => return None,
    };
    Some((ty, optional))
}

fn xlam_tool(json: &serde_json::Value) -> Result<ToolDefinition, String> {
    let name = json
        .get("name")
        .and_then(|n| n.as_str())
        .ok_or("tool without a name")?;
    let description = json
        .get("description")
        .and_then(|d| d.as_str())
        .unwrap_or("");
    let mut params = Vec::new();
    if let Some(serde_json::Value::Object(props)) = json.get("parameters") {
        for (pname, prop) in props {
            let ty_text = prop.get("type").and_then(|t| t.as_str()).unwrap_or("any");
            let (ty, optional) = xlam_type(ty_text).ok_or_else(|| {
                SchemaError::UnknownType {
                    tool: name.into(),
                    param: pname.clone(),
                    keyword: ty_text.into(),
                }
                .to_string()
            })?;
            let desc = prop
                .get("description")
                .and_then(|d| d.as_str())
                .unwrap_or("");
            let required = !optional && prop.get("default").is_none();
            params.push(ParamSpec::new(pname.clone(), ty, required).describe(desc));
        }
    }
    ToolDefinition::new(name, description, params).map_err(|e| e.to_string())
}

/// Fields that xlam stores either inline or as a JSON-encoded string.
fn inline_json(v: Option<&serde_json::Value>) -> Result<serde_json::Value, String> {
    match v {
        Some(serde_json::Value::String(s)) => serde_json::from_str(s).map_err(|e| e.to_string()),
        Some(other) => Ok(other.clone()),
        None => Err("missing field".into()),
    }
}

fn raw_library(tools: &serde_json::Value) -> Result<ToolLibrary, String> {
    let items = tools.as_array().ok_or("tools is not a list")?;
    let bfcl_shaped = items.iter().any(|t| {
        t.get("parameters")
            .is_some_and(|p| p.get("properties").is_some())
    });
    if bfcl_shaped {
        return library_from_json(tools).map_err(|e| e.to_string());
    }
    let defs = items.iter().map(xlam_tool).collect::<Result<Vec<_>, _>>()?;
    ToolLibrary::new(defs).map_err(|e| e.to_string())
}

pub fn raw_sample_from_json(
    record: &serde_json::Value,
    index: usize,
) -> Result<RawSample, RawSampleError> {
    let fail = |message: String| RawSampleError { index, message };
    let id = match record.get("id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => index.to_string(),
    };
    let query = record
        .get("query")
        .and_then(|q| q.as_str())
        .ok_or_else(|| fail("missing query".into()))?
        .to_string();
    let tools = inline_json(record.get("tools")).map_err(|e| fail(format!("tools: {e}")))?;
    let library = raw_library(&tools).map_err(|e| fail(format!("tools: {e}")))?;
    let answers = inline_json(record.get("answers")).map_err(|e| fail(format!("answers: {e}")))?;
    let mut calls = Vec::new();
    for a in answers
        .as_array()
        .ok_or_else(|| fail("answers is not a list".into()))?
    {
        let name = a
            .get("name")
            .and_then(|n| n.as_str())
            .ok_or_else(|| fail("answer without a name".into()))?;
        if !library.contains(name) {
            return Err(fail(format!("answer calls unknown tool `{name}`")));
        }
        let mut call = ToolInvocation::new(name);
        if let Some(serde_json::Value::Object(args)) = a.get("arguments") {
            for (k, v) in args {
                call.args.insert(k.clone(), Value::from_json(v));
            }
        }
        calls.push(call);
    }
    Ok(RawSample {
        id,
        query,
        library,
        ground_truth: InvocationList::new(calls),
    })
}

/// Reads a raw corpus given as a JSON array or as JSONL. Each record
/// parses independently; a malformed document yields a single error.
pub fn load_raw_corpus(text: &str) -> Vec<Result<RawSample, RawSampleError>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return match serde_json::from_str::<Vec<serde_json::Value>>(trimmed) {
            Ok(items) => items
                .iter()
                .enumerate()
                .map(|(i, r)| raw_sample_from_json(r, i))
                .collect(),
            Err(e) => vec![Err(RawSampleError {
                index: 0,
                message: e.to_string(),
            })],
        };
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str::<serde_json::Value>(line)
                .map_err(|e| RawSampleError {
                    index: i,
                    message: e.to_string(),
                })
                .and_then(|r| raw_sample_from_json(&r, i))
        })
        .collect()
}
