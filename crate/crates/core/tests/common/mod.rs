//! Generators and brute-force reference implementations shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code, clippy::match_like_matches_macro)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use indexmap::IndexMap;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tooldc::evalharness::AnswerSpec;
use tooldc::schema::{
    InvocationList, ParamSpec, ParamType, ToolDefinition, ToolInvocation, ToolLibrary, Value,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Seeded generators

const WORDS: &[&str] = &[
    "city", "date", "amount", "query", "limit", "user", "id", "name", "unit", "mode", "value", "x",
    "y", "flag", "tags", "meta",
];

const CHARS: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '9', ' ', ',', '(', ')', '[', ']', '=', '"', '\'', '\\', '\n', '\t',
    '\r', '\u{1}', '\u{7f}', 'é', '日', '🙂', '{', ':',
];

pub fn gen_ident(rng: &mut ChaCha8Rng) -> String {
    let base = *WORDS.choose(rng).unwrap();
    if rng.gen_bool(0.3) {
        format!("{base}_{}", rng.gen_range(0..10))
    } else {
        base.to_string()
    }
}

pub fn gen_tool_name(rng: &mut ChaCha8Rng) -> String {
    let head = ["get", "set", "find", "math", "calc"][rng.gen_range(0..5)];
    let tail = gen_ident(rng);
    if rng.gen_bool(0.2) {
        format!("{head}.{tail}")
    } else {
        format!("{head}_{tail}")
    }
}

pub fn gen_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..8);
    (0..len).map(|_| *CHARS.choose(rng).unwrap()).collect()
}

pub fn gen_float(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..6) {
        0 => rng.gen_range(-10..10) as f64,
        1 => rng.gen_range(-1e6..1e6),
        2 => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300)),
        3 => -rng.gen::<f64>() * 1e-7,
        4 => [0.1, 0.5, 2.5, 1e21, 1e-5, f64::MAX, f64::MIN_POSITIVE][rng.gen_range(0..7)],
        _ => rng.gen_range(-3.0..3.0),
    }
}

/// A value of the given kind index (0 text, 1 int, 2 float, 3 bool, 4 null,
/// 5 list, 6 map).
pub fn gen_value_of(rng: &mut ChaCha8Rng, kind: usize, depth: usize) -> Value {
    match kind {
        0 => Value::Text(gen_text(rng)),
        1 => Value::Int(match rng.gen_range(0..4) {
            0 => i64::MAX,
            1 => i64::MIN + 1,
            _ => rng.gen_range(-1000..1000),
        }),
        2 => Value::Float(gen_float(rng)),
        3 => Value::Bool(rng.gen()),
        4 => Value::Null,
        5 => {
            let n = if depth == 0 { 0 } else { rng.gen_range(0..4) };
            Value::List((0..n).map(|_| gen_value(rng, depth - 1)).collect())
        }
        _ => {
            let n = if depth == 0 { 0 } else { rng.gen_range(0..4) };
            let mut m = IndexMap::new();
            for _ in 0..n {
                m.insert(gen_text(rng), gen_value(rng, depth - 1));
            }
            Value::Map(m)
        }
    }
}

pub fn gen_value(rng: &mut ChaCha8Rng, depth: usize) -> Value {
    let kind = rng.gen_range(0..7);
    gen_value_of(rng, kind, depth)
}

pub fn gen_call(rng: &mut ChaCha8Rng) -> ToolInvocation {
    let mut call = ToolInvocation::new(gen_tool_name(rng));
    for _ in 0..rng.gen_range(0..5) {
        call.args.insert(gen_ident(rng), gen_value(rng, 3));
    }
    call
}

pub fn gen_invocations(rng: &mut ChaCha8Rng) -> InvocationList {
    let n = rng.gen_range(0..5);
    InvocationList::new((0..n).map(|_| gen_call(rng)).collect())
}

pub const ALL_TYPES: [ParamType; 7] = [
    ParamType::String,
    ParamType::Integer,
    ParamType::Float,
    ParamType::Boolean,
    ParamType::Array,
    ParamType::Object,
    ParamType::Any,
];

pub fn gen_tool(rng: &mut ChaCha8Rng, name: String) -> ToolDefinition {
    let mut params: Vec<ParamSpec> = Vec::new();
    for _ in 0..rng.gen_range(0..5) {
        let pname = gen_ident(rng);
        if params.iter().any(|p| p.name == pname) {
            continue;
        }
        let ty = *ALL_TYPES.choose(rng).unwrap();
        params.push(ParamSpec::new(pname, ty, rng.gen_bool(0.5)));
    }
    ToolDefinition::new(name, "generated", params).unwrap()
}

/// Value whose kind matches `ty` (for `Any`, any kind).
pub fn gen_conforming(rng: &mut ChaCha8Rng, ty: ParamType) -> Value {
    let kind = match ty {
        ParamType::String => 0,
        ParamType::Integer => 1,
        ParamType::Float => *[1, 2].choose(rng).unwrap(),
        ParamType::Boolean => 3,
        ParamType::Array => 5,
        ParamType::Object => 6,
        ParamType::Any => rng.gen_range(0..7),
    };
    gen_value_of(rng, kind, 2)
}

/// A schema set and an outcome that exercises unknown names, unknown keys,
/// missing required parameters and every value kind.
pub fn gen_validation_case(rng: &mut ChaCha8Rng) -> (Vec<ToolDefinition>, InvocationList) {
    let mut schemas: Vec<ToolDefinition> = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let name = gen_tool_name(rng);
        if schemas.iter().all(|t| t.name != name) {
            let t = gen_tool(rng, name);
            schemas.push(t);
        }
    }
    let mut calls = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let target = schemas.choose(rng).unwrap().clone();
        let name = if rng.gen_bool(0.15) {
            format!("{}_x", target.name)
        } else {
            target.name.clone()
        };
        let mut call = ToolInvocation::new(name);
        for p in &target.params {
            let include = if p.required {
                rng.gen_bool(0.85)
            } else {
                rng.gen_bool(0.5)
            };
            if !include {
                continue;
            }
            let v = match rng.gen_range(0..10) {
                0..=6 => gen_conforming(rng, p.ty),
                7 => Value::Null,
                _ => gen_value(rng, 2),
            };
            call.args.insert(p.name.clone(), v);
        }
        if rng.gen_bool(0.15) {
            call.args.insert("extra_key".into(), gen_value(rng, 1));
        }
        calls.push(call);
    }
    (schemas, InvocationList::new(calls))
}

// ---------------------------------------------------------------------------
// proptest strategies

fn arb_ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

pub fn arb_tool_name() -> impl Strategy<Value = String> {
    (arb_ident(), proptest::option::of(arb_ident())).prop_map(|(a, b)| match b {
        Some(b) => format!("{a}.{b}"),
        None => a,
    })
}

pub fn arb_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        proptest::num::f64::NORMAL,
        proptest::num::f64::SUBNORMAL,
        Just(0.0),
        Just(-0.0),
        (-1000i32..1000).prop_map(|i| i as f64 / 8.0),
    ]
}

pub fn arb_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<String>().prop_map(Value::Text),
        any::<i64>().prop_map(Value::Int),
        arb_float().prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
        Just(Value::Null),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            proptest::collection::vec((any::<String>(), inner), 0..4)
                .prop_map(|kv| Value::Map(kv.into_iter().collect())),
        ]
    })
}

pub fn arb_call() -> impl Strategy<Value = ToolInvocation> {
    (
        arb_tool_name(),
        proptest::collection::vec((arb_ident(), arb_value()), 0..4),
    )
        .prop_map(|(name, args)| {
            let mut call = ToolInvocation::new(name);
            call.args.extend(args);
            call
        })
}

pub fn arb_invocations() -> impl Strategy<Value = InvocationList> {
    proptest::collection::vec(arb_call(), 0..4).prop_map(InvocationList::new)
}

// ---------------------------------------------------------------------------
// Oracles

fn kind_fits(ty: ParamType, v: &Value) -> bool {
    match (ty, v) {
        (ParamType::Any, _) => true,
        (ParamType::String, Value::Text(_)) => true,
        (ParamType::Integer, Value::Int(_)) => true,
        (ParamType::Float, Value::Int(_) | Value::Float(_)) => true,
        (ParamType::Boolean, Value::Bool(_)) => true,
        (ParamType::Array, Value::List(_)) => true,
        (ParamType::Object, Value::Map(_)) => true,
        _ => false,
    }
}

/// Reason tuples `(dimension, function, key)` for one outcome, checked by
/// looping over every call, every argument and every declared parameter.
pub fn oracle_reasons(
    outcome: Option<&InvocationList>,
    schemas: &[ToolDefinition],
) -> BTreeSet<(&'static str, String, String)> {
    let mut out = BTreeSet::new();
    let calls = match outcome {
        Some(l) if !l.calls.is_empty() => &l.calls,
        _ => {
            out.insert(("null", String::new(), String::new()));
            return out;
        }
    };
    for call in calls {
        let mut found = None;
        for s in schemas {
            if s.name == call.name {
                found = Some(s);
            }
        }
        let Some(schema) = found else {
            out.insert(("name", call.name.clone(), String::new()));
            continue;
        };
        for (key, value) in &call.args {
            let mut declared = None;
            for p in &schema.params {
                if &p.name == key {
                    declared = Some(p);
                }
            }
            match declared {
                None => {
                    out.insert(("key", call.name.clone(), key.clone()));
                }
                Some(p) => {
                    let ok = if *value == Value::Null {
                        p.ty == ParamType::Any || !p.required
                    } else {
                        kind_fits(p.ty, value)
                    };
                    if !ok {
                        out.insert(("type", call.name.clone(), key.clone()));
                    }
                }
            }
        }
        for p in &schema.params {
            if p.required && !call.args.keys().any(|k| k == &p.name) {
                out.insert(("required", call.name.clone(), p.name.clone()));
            }
        }
    }
    out
}

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Plain-loop Okapi BM25 (k1 = 1.5, b = 0.75) over tool texts.
pub fn oracle_bm25(query: &str, lib: &ToolLibrary) -> Vec<f64> {
    let docs: Vec<Vec<String>> = lib
        .tools()
        .iter()
        .map(|t| {
            let mut text = format!("{} {}", t.name, t.description);
            for p in &t.params {
                text = format!("{text} {} {}", p.name, p.description);
            }
            oracle_tokens(&text)
        })
        .collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let (k1, b) = (1.5, 0.75);
    let q = oracle_tokens(query);
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for term in &q {
                let tf = doc.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let norm = if avgdl > 0.0 {
                    1.0 - b + b * doc.len() as f64 / avgdl
                } else {
                    1.0
                };
                score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            score
        })
        .collect()
}

/// Positions sorted by descending oracle score, ties by position.
pub fn oracle_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // insertion sort keeps the oracle free of comparator subtleties
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && scores[idx[j]] > scores[idx[j - 1]] {
            idx.swap(j, j - 1);
            j -= 1;
        }
    }
    idx
}

fn numbers_equal(a: &Value, b: &Value) -> Option<bool> {
    match (a, b) {
        (Value::Int(x), Value::Float(f)) | (Value::Float(f), Value::Int(x)) => {
            // exact: the float must be integral and equal to the integer
            if f.fract() != 0.0 || !f.is_finite() || f.abs() > 1e19 {
                return Some(false);
            }
            Some(*x as i128 == *f as i128)
        }
        _ => None,
    }
}

pub fn oracle_value_eq(a: &Value, b: &Value) -> bool {
    if let Some(r) = numbers_equal(a, b) {
        return r;
    }
    match (a, b) {
        (Value::List(x), Value::List(y)) => {
            x.len() == y.len() && (0..x.len()).all(|i| oracle_value_eq(&x[i], &y[i]))
        }
        (Value::Map(x), Value::Map(y)) => {
            x.len() == y.len()
                && x.keys()
                    .all(|k| y.contains_key(k) && oracle_value_eq(&x[k], &y[k]))
        }
        _ => a == b,
    }
}

fn oracle_call_ok(call: &ToolInvocation, spec: &AnswerSpec) -> bool {
    if call.name != spec.function {
        return false;
    }
    for (k, v) in &call.args {
        match spec.params.get(k) {
            Some(acc) if acc.iter().any(|a| oracle_value_eq(v, a)) => {}
            _ => return false,
        }
    }
    for k in spec.params.keys() {
        if !spec.optional.contains(k) && !call.args.contains_key(k) {
            return false;
        }
    }
    true
}

/// Tries every permutation of the expected calls against the predictions.
pub fn oracle_ast_match(pred: Option<&InvocationList>, spec: &[AnswerSpec]) -> bool {
    let Some(pred) = pred else { return false };
    if pred.calls.is_empty() || pred.calls.len() != spec.len() {
        return false;
    }
    fn permute(
        i: usize,
        perm: &mut Vec<usize>,
        pred: &[ToolInvocation],
        spec: &[AnswerSpec],
    ) -> bool {
        if i == perm.len() {
            return (0..perm.len()).all(|k| oracle_call_ok(&pred[k], &spec[perm[k]]));
        }
        for j in i..perm.len() {
            perm.swap(i, j);
            // skip branches whose fixed prefix already fails
            if oracle_call_ok(&pred[i], &spec[perm[i]]) && permute(i + 1, perm, pred, spec) {
                return true;
            }
            perm.swap(i, j);
        }
        false
    }
    let mut perm: Vec<usize> = (0..spec.len()).collect();
    permute(0, &mut perm, &pred.calls, spec)
}

/// Random parallel-call fixture: up to 8 expected calls over a few function
/// names, and a prediction that either satisfies them in shuffled order or
/// carries one perturbation.
pub fn gen_ast_fixture(rng: &mut ChaCha8Rng) -> (InvocationList, Vec<AnswerSpec>) {
    let n = rng.gen_range(1..=8);
    let names = ["f", "g", "h"];
    let mut specs = Vec::new();
    let mut calls = Vec::new();
    for _ in 0..n {
        let name = names[rng.gen_range(0..names.len())];
        let mut spec = AnswerSpec::new(name);
        let mut call = ToolInvocation::new(name);
        for p in ["a", "b", "c"].iter().take(rng.gen_range(0..=3)) {
            let acc: Vec<Value> = (0..rng.gen_range(1..3))
                .map(|_| match rng.gen_range(0..4) {
                    0 => Value::Int(rng.gen_range(0..3)),
                    1 => Value::Float(rng.gen_range(0..3) as f64),
                    2 => Value::Text(["x", "y"][rng.gen_range(0..2)].into()),
                    _ => Value::List(vec![Value::Int(rng.gen_range(0..2))]),
                })
                .collect();
            let optional = rng.gen_bool(0.25);
            if optional {
                spec = spec.optional_param(*p, acc.clone());
            } else {
                spec = spec.param(*p, acc.clone());
            }
            if !optional || rng.gen_bool(0.5) {
                call.args
                    .insert(p.to_string(), acc.choose(rng).unwrap().clone());
            }
        }
        specs.push(spec);
        calls.push(call);
    }
    calls.shuffle(rng);
    match rng.gen_range(0..5) {
        0 => {
            let i = rng.gen_range(0..calls.len());
            calls[i]
                .args
                .insert("a".into(), Value::Int(rng.gen_range(0..3)));
        }
        1 => {
            let i = rng.gen_range(0..calls.len());
            calls[i].name = names[rng.gen_range(0..names.len())].into();
        }
        2 if calls.len() > 1 => {
            calls.pop();
        }
        3 => {
            let i = rng.gen_range(0..calls.len());
            calls[i].args.shift_remove("b");
        }
        _ => {}
    }
    (InvocationList::new(calls), specs)
}

// ---------------------------------------------------------------------------
// Synthetic suite for the degradation/rescue mechanism

pub struct SyntheticInstance {
    pub id: String,
    pub query: String,
    pub tools: Vec<ToolDefinition>,
    pub golden: String,
    pub answer: ToolInvocation,
}

const TOPICS: &[&str] = &[
    "weather",
    "stock",
    "flight",
    "hotel",
    "recipe",
    "invoice",
    "ticket",
    "music",
    "movie",
    "traffic",
    "parking",
    "calendar",
    "email",
    "translate",
    "news",
    "crypto",
    "fitness",
    "loan",
    "tax",
    "package",
    "password",
    "domain",
    "file",
    "repo",
    "population",
    "timezone",
    "unit",
    "quadratic",
    "prime",
    "horoscope",
];

const FILLER: &[&str] = &[
    "get", "find", "lookup", "report", "latest", "details", "info", "data", "current", "search",
];

/// Instances with `n` tools each. The query names the golden tool's topic
/// once and repeats up to eight distractor topics, so BM25 places the
/// golden tool anywhere from first to well outside the top five.
pub fn synthetic_suite(count: usize, n: usize, seed: u64) -> Vec<SyntheticInstance> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let mut topics: Vec<&str> = TOPICS.to_vec();
            topics.shuffle(&mut rng);
            let topics = &topics[..n];
            let mut tools: Vec<ToolDefinition> = topics
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    let filler = FILLER[rng.gen_range(0..FILLER.len())];
                    let desc = format!("{filler} {t} {} information", FILLER[j % FILLER.len()]);
                    ToolDefinition::new(
                        format!("{t}_tool_{i}"),
                        desc,
                        vec![ParamSpec::new("arg", ParamType::String, true)
                            .describe(format!("{t} subject"))],
                    )
                    .unwrap()
                })
                .collect();
            tools.shuffle(&mut rng);
            let golden_topic = topics[0];
            let mut words = vec![golden_topic.to_string()];
            for &d in &topics[1..1 + rng.gen_range(0..9)] {
                for _ in 0..rng.gen_range(2..4) {
                    words.push(d.to_string());
                }
            }
            words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            words.shuffle(&mut rng);
            let query = format!("q{i}: please {}", words.join(" "));
            let golden = format!("{golden_topic}_tool_{i}");
            let mut answer = ToolInvocation::new(golden.clone());
            answer
                .args
                .insert("arg".into(), Value::Text(format!("v{i}")));
            SyntheticInstance {
                id: format!("syn_{i}"),
                query,
                tools,
                golden,
                answer,
            }
        })
        .collect()
}
