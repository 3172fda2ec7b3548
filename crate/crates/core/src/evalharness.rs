//! Benchmark datasets, extended-setting distractor injection, strict AST
//! exact-match scoring and per-category metrics.
//!
//! Dataset files are JSONL, one instance per line:
//!
//! ```json
//! {"id": "simple_0", "category": "simple", "question": "...",
//!  "functions": [ ...tool library... ], "golden": ["calculate_triangle_area"],
//!  "answers": [{"fn": "calculate_triangle_area",
//!               "params": {"base": [10], "height": [5], "unit": ["units"]},
//!               "optional": ["unit"]}]}
//! ```
//!
//! An empty string among a parameter's acceptable values is read as "this
//! parameter may be omitted", the convention of BFCL possible-answer files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use futures::stream::{self, StreamExt};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pipeline::{Pipeline, PipelineError, RunTrace, Strategy};
use crate::schema::{
    library_from_json, library_to_json, InvocationList, SchemaError, ToolInvocation, ToolLibrary,
    Value,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: {source}")]
    Schema { line: usize, source: SchemaError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InjectError {
    #[error("instance `{instance}`: target size {target} is below the original {original} tools")]
    BelowOriginal {
        instance: String,
        original: usize,
        target: usize,
    },
    #[error("instance `{instance}`: needs {needed} distractors but the pool offers {available}")]
    PoolExhausted {
        instance: String,
        needed: usize,
        available: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Acceptable answers for one expected call.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSpec {
    pub function: String,
    /// Parameter name to acceptable values.
    pub params: IndexMap<String, Vec<Value>>,
    /// Parameters that may be omitted.
    pub optional: BTreeSet<String>,
}

impl AnswerSpec {
    pub fn new(function: impl Into<String>) -> Self {
        Self {
            function: function.into(),
            params: IndexMap::new(),
            optional: BTreeSet::new(),
        }
    }

    pub fn param(mut self, name: impl Into<String>, acceptable: Vec<Value>) -> Self {
        self.params.insert(name.into(), acceptable);
        self
    }

    pub fn optional_param(mut self, name: impl Into<String>, acceptable: Vec<Value>) -> Self {
        let name = name.into();
        self.optional.insert(name.clone());
        self.params.insert(name, acceptable);
        self
    }

    /// The call whose arguments are each parameter's first acceptable value,
    /// omitting optional parameters.
    pub fn canonical_call(&self) -> ToolInvocation {
        let mut call = ToolInvocation::new(&self.function);
        for (name, values) in &self.params {
            if !self.optional.contains(name) {
                if let Some(v) = values.first() {
                    call.args.insert(name.clone(), v.clone());
                }
            }
        }
        call
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub id: String,
    pub category: String,
    pub query: String,
    pub library: ToolLibrary,
    pub golden: Vec<String>,
    pub answers: Vec<AnswerSpec>,
}

impl EvalInstance {
    pub fn golden_positions(&self) -> Result<Vec<usize>, PipelineError> {
        if self.golden.is_empty() {
            return Err(PipelineError::MissingGolden(self.id.clone()));
        }
        self.golden
            .iter()
            .map(|n| {
                self.library
                    .position(n)
                    .ok_or_else(|| PipelineError::UnknownGolden(n.clone()))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Dataset files

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    #[serde(default)]
    category: String,
    question: serde_json::Value,
    #[serde(alias = "function")]
    functions: serde_json::Value,
    #[serde(default)]
    golden: Vec<String>,
    #[serde(default)]
    answers: Vec<AnswerRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnswerRecord {
    #[serde(rename = "fn")]
    function: String,
    #[serde(default)]
    params: IndexMap<String, Vec<Value>>,
    #[serde(default)]
    optional: Vec<String>,
}

/// Plain string, or BFCL's nested message turns (last user message wins).
fn question_text(q: &serde_json::Value) -> Option<String> {
    match q {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(_) => {
            fn last_user(v: &serde_json::Value) -> Option<String> {
                match v {
                    serde_json::Value::Array(items) => items.iter().rev().find_map(last_user),
                    serde_json::Value::Object(m) if m.get("role")?.as_str()? == "user" => {
                        m.get("content")?.as_str().map(str::to_string)
                    }
                    _ => None,
                }
            }
            last_user(q)
        }
        _ => None,
    }
}

fn instance_from_record(record: InstanceRecord, line: usize) -> Result<EvalInstance, DatasetError> {
    let bad = |message: String| DatasetError::Line { line, message };
    let query = question_text(&record.question)
        .ok_or_else(|| bad(format!("instance `{}`: unreadable question", record.id)))?;
    let library = library_from_json(&record.functions)
        .map_err(|source| DatasetError::Schema { line, source })?;
    for name in &record.golden {
        if !library.contains(name) {
            return Err(bad(format!(
                "instance `{}`: golden tool `{name}` is not among its functions",
                record.id
            )));
        }
    }
    let mut answers = Vec::with_capacity(record.answers.len());
    for a in record.answers {
        if !record.golden.is_empty() && !record.golden.contains(&a.function) {
            return Err(bad(format!(
                "instance `{}`: answer function `{}` is not a golden tool",
                record.id, a.function
            )));
        }
        let mut spec = AnswerSpec::new(a.function);
        spec.optional.extend(a.optional);
        for (name, values) in a.params {
            let sentinel = Value::Text(String::new());
            if values.contains(&sentinel) {
                spec.optional.insert(name.clone());
            }
            let values: Vec<Value> = values.into_iter().filter(|v| *v != sentinel).collect();
            if values.is_empty() && !spec.optional.contains(&name) {
                return Err(bad(format!(
                    "instance `{}`: parameter `{name}` has no acceptable values",
                    record.id
                )));
            }
            spec.params.insert(name, values);
        }
        answers.push(spec);
    }
    Ok(EvalInstance {
        id: record.id,
        category: record.category,
        query,
        library,
        golden: record.golden,
        answers,
    })
}

pub fn parse_instance(line_text: &str, line: usize) -> Result<EvalInstance, DatasetError> {
    let record: InstanceRecord =
        serde_json::from_str(line_text).map_err(|e| DatasetError::Line {
            line,
            message: e.to_string(),
        })?;
    instance_from_record(record, line)
}

/// Reads a JSONL dataset; blank lines are skipped, line numbers are 1-based.
pub fn load_dataset(reader: impl BufRead) -> Result<Vec<EvalInstance>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_instance(&line, i + 1)?);
    }
    Ok(out)
}

/// One JSONL line (no trailing newline).
pub fn instance_to_json_line(instance: &EvalInstance) -> String {
    let record = InstanceRecord {
        id: instance.id.clone(),
        category: instance.category.clone(),
        question: serde_json::Value::String(instance.query.clone()),
        functions: library_to_json(instance.library.tools()),
        golden: instance.golden.clone(),
        answers: instance
            .answers
            .iter()
            .map(|a| AnswerRecord {
                function: a.function.clone(),
                params: a.params.clone(),
                optional: a.optional.iter().cloned().collect(),
            })
            .collect(),
    };
    serde_json::to_string(&record).expect("instance records always serialize")
}

pub fn dataset_to_jsonl(dataset: &[EvalInstance]) -> String {
    dataset
        .iter()
        .map(|i| instance_to_json_line(i) + "\n")
        .collect()
}

// ---------------------------------------------------------------------------
// Scoring

/// Whether one call satisfies one answer spec: same name, every argument
/// key known to the spec with an acceptable value, every non-optional
/// parameter present.
pub fn call_matches(call: &ToolInvocation, spec: &AnswerSpec) -> bool {
    call.name == spec.function
        && call.args.iter().all(|(key, value)| {
            spec.params
                .get(key)
                .is_some_and(|acc| acc.iter().any(|a| value.coerced_eq(a)))
        })
        && spec
            .params
            .keys()
            .all(|k| spec.optional.contains(k) || call.args.contains_key(k))
}

/// Strict AST exact match: a one-to-one, order-insensitive pairing of the
/// predicted calls with the expected ones in which every pair matches.
pub fn ast_match(pred: Option<&InvocationList>, spec: &[AnswerSpec]) -> bool {
    let Some(pred) = pred.filter(|p| !p.is_null()) else {
        return false;
    };
    let n = pred.calls.len();
    if n != spec.len() {
        return false;
    }
    let compatible: Vec<Vec<usize>> = pred
        .calls
        .iter()
        .map(|c| (0..n).filter(|&j| call_matches(c, &spec[j])).collect())
        .collect();
    // Kuhn's augmenting paths over the compatibility graph.
    fn augment(
        i: usize,
        compatible: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &j in &compatible[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, compatible, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n];
    (0..n).all(|i| augment(i, &compatible, &mut vec![false; n], &mut owner))
}

// ---------------------------------------------------------------------------
// Extended setting

/// Seed for one instance of a dataset-wide injection, stable across runs
/// and platforms.
pub fn instance_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Pads the instance's library to `target` tools with distractors drawn
/// from `pool`, each inserted at a random position. Pool tools whose names
/// clash with the instance's own tools are never drawn.
pub fn inject_noise(
    instance: &EvalInstance,
    pool: &ToolLibrary,
    target: usize,
    seed: u64,
) -> Result<EvalInstance, InjectError> {
    let original = instance.library.len();
    if target < original {
        return Err(InjectError::BelowOriginal {
            instance: instance.id.clone(),
            original,
            target,
        });
    }
    let needed = target - original;
    if needed == 0 {
        return Ok(instance.clone());
    }
    let candidates: Vec<_> = pool
        .tools()
        .iter()
        .filter(|t| !instance.library.contains(&t.name))
        .collect();
    if candidates.len() < needed {
        return Err(InjectError::PoolExhausted {
            instance: instance.id.clone(),
            needed,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tools = instance.library.tools().to_vec();
    for idx in rand::seq::index::sample(&mut rng, candidates.len(), needed).into_vec() {
        let at = rng.gen_range(0..=tools.len());
        tools.insert(at, candidates[idx].clone());
    }
    Ok(EvalInstance {
        library: ToolLibrary::new(tools).expect("pool names were filtered for clashes"),
        ..instance.clone()
    })
}

pub fn inject_dataset(
    dataset: &[EvalInstance],
    pool: &ToolLibrary,
    target: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>, InjectError> {
    dataset
        .iter()
        .map(|inst| inject_noise(inst, pool, target, instance_seed(seed, &inst.id)))
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics and evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub matched: usize,
    pub scored: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub categories: BTreeMap<String, CategoryScore>,
    /// Unweighted mean of category accuracies within each rollup.
    pub rollups: BTreeMap<String, f64>,
    /// Unweighted mean of the rollups.
    pub overall: f64,
    pub matched: usize,
    pub scored: usize,
}

/// How categories are grouped before averaging into the overall score.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Rollup {
    /// Categories whose name starts with `live` form "live", the rest "non_live".
    #[default]
    LiveSplit,
    Explicit(BTreeMap<String, Vec<String>>),
}

impl Rollup {
    fn group_of(&self, category: &str) -> Option<String> {
        match self {
            Rollup::LiveSplit => Some(if category.starts_with("live") {
                "live".into()
            } else {
                "non_live".into()
            }),
            Rollup::Explicit(map) => map
                .iter()
                .find(|(_, cats)| cats.iter().any(|c| c == category))
                .map(|(name, _)| name.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    pub category: String,
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// 1-based line of this instance's trace in the trace file.
    pub trace_line: usize,
}

pub fn aggregate(results: &[InstanceResult], rollup: &Rollup) -> Metrics {
    let mut categories: BTreeMap<String, CategoryScore> = BTreeMap::new();
    for r in results {
        let c = categories
            .entry(r.category.clone())
            .or_insert(CategoryScore {
                matched: 0,
                scored: 0,
                accuracy: 0.0,
            });
        c.scored += 1;
        c.matched += usize::from(r.matched);
    }
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, c) in categories.iter_mut() {
        c.accuracy = c.matched as f64 / c.scored as f64;
        if let Some(g) = rollup.group_of(name) {
            grouped.entry(g).or_default().push(c.accuracy);
        }
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let rollups: BTreeMap<String, f64> =
        grouped.iter().map(|(k, v)| (k.clone(), mean(v))).collect();
    let overall = mean(&rollups.values().copied().collect::<Vec<_>>());
    Metrics {
        matched: results.iter().filter(|r| r.matched).count(),
        scored: results.len(),
        categories,
        rollups,
        overall,
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Instances in flight at once.
    pub concurrency: usize,
    pub rollup: Rollup,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            rollup: Rollup::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub results: Vec<InstanceResult>,
    pub traces: Vec<RunTrace>,
}

/// Runs `strategy` over every instance and scores the answers. Pipeline
/// failures count as unmatched and are noted on the result.
pub async fn evaluate(
    dataset: &[EvalInstance],
    strategy: Strategy,
    pipeline: &Pipeline,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let runs: Vec<(InstanceResult, RunTrace)> = stream::iter(dataset.iter().enumerate())
        .map(|(i, inst)| async move {
            let (matched, error, trace) = match pipeline.run_strategy(inst, strategy).await {
                Ok(trace) => (
                    ast_match(trace.final_answer.as_ref(), &inst.answers),
                    None,
                    trace,
                ),
                Err(e) => (
                    false,
                    Some(e.to_string()),
                    RunTrace::failed(&inst.id, strategy, &e),
                ),
            };
            let result = InstanceResult {
                id: inst.id.clone(),
                category: inst.category.clone(),
                matched,
                error,
                trace_line: i + 1,
            };
            (result, trace)
        })
        .buffered(cfg.concurrency.max(1))
        .collect()
        .await;
    let (results, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(EvalReport {
        metrics: aggregate(&results, &cfg.rollup),
        results,
        traces,
    })
}
