//! Deterministic scripted model for offline runs and tests.
//!
//! Rules see the same thing a real model would: the question (the user
//! message) and the tool names found in the JSON library embedded in the
//! system prompt.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, CompletionPort, PortError, Usage, UsageCounter};
use crate::prompts::TOOLS_MARKER;

pub const GIBBERISH: &str = "~~ scripted fault: garbled output ~~";

/// Conditions a request must meet for a rule to fire. Empty conditions
/// match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matcher {
    /// Every substring must occur in the question (case-insensitive).
    pub query_contains: Vec<String>,
    pub query_equals: Option<String>,
    /// Every named tool must be in the context.
    pub tools_include: Vec<String>,
    /// None of the named tools may be in the context.
    pub tools_exclude: Vec<String>,
    pub min_tools: Option<usize>,
    pub max_tools: Option<usize>,
    /// Substring of the system prompt, e.g. to tell the try stage from the retry stage.
    pub system_contains: Option<String>,
}

impl Matcher {
    pub fn accepts(&self, query: &str, system: &str, tools: &BTreeSet<String>) -> bool {
        let lowered = query.to_lowercase();
        self.query_contains
            .iter()
            .all(|s| lowered.contains(&s.to_lowercase()))
            && self.query_equals.as_deref().is_none_or(|q| q == query)
            && self.tools_include.iter().all(|t| tools.contains(t))
            && !self.tools_exclude.iter().any(|t| tools.contains(t))
            && self.min_tools.is_none_or(|n| tools.len() >= n)
            && self.max_tools.is_none_or(|n| tools.len() <= n)
            && self
                .system_contains
                .as_deref()
                .is_none_or(|s| system.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub when: Matcher,
    pub respond: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Unparseable text instead of the scripted answer.
    Gibberish,
    /// The call fails at the transport level.
    Transport,
}

/// On-disk form of a [`ScriptedMock`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: String,
    /// Keyed by 1-based call ordinal.
    #[serde(default)]
    pub faults: BTreeMap<u64, Fault>,
}

#[derive(Debug, Default)]
pub struct ScriptedMock {
    fixture: MockFixture,
    usage: UsageCounter,
}

impl ScriptedMock {
    pub fn new(default: impl Into<String>) -> Self {
        Self::from_fixture(MockFixture {
            default: default.into(),
            ..MockFixture::default()
        })
    }

    pub fn from_fixture(fixture: MockFixture) -> Self {
        Self {
            fixture,
            usage: UsageCounter::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PortError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PortError::Config(format!("{}: {e}", path.display())))?;
        let fixture = serde_json::from_str(&text)
            .map_err(|e| PortError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::from_fixture(fixture))
    }

    pub fn rule(mut self, when: Matcher, respond: impl Into<String>) -> Self {
        self.fixture.rules.push(MockRule {
            when,
            respond: respond.into(),
        });
        self
    }

    pub fn fault(mut self, ordinal: u64, fault: Fault) -> Self {
        self.fixture.faults.insert(ordinal, fault);
        self
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    /// The scripted answer for a request, ignoring faults and accounting.
    pub fn respond(&self, req: &ChatRequest) -> &str {
        let tools = extract_tool_names(&req.system);
        self.fixture
            .rules
            .iter()
            .find(|r| r.when.accepts(&req.user, &req.system, &tools))
            .map_or(self.fixture.default.as_str(), |r| r.respond.as_str())
    }
}

#[async_trait]
impl CompletionPort for ScriptedMock {
    async fn complete(&self, req: &ChatRequest) -> Result<String, PortError> {
        let ordinal = self.usage.record_call();
        match self.fixture.faults.get(&ordinal) {
            Some(Fault::Gibberish) => Ok(GIBBERISH.to_string()),
            Some(Fault::Transport) => Err(PortError::Transport(format!(
                "scripted transport fault on call {ordinal}"
            ))),
            None => Ok(self.respond(req).to_string()),
        }
    }

    fn usage(&self) -> Usage {
        self.usage.snapshot()
    }
}

/// Names of the tools in the JSON library that follows the tool-list
/// marker of a system prompt. Empty if there is no marker or no array.
pub fn extract_tool_names(system: &str) -> BTreeSet<String> {
    let Some(at) = system.find(TOOLS_MARKER) else {
        return BTreeSet::new();
    };
    let rest = system[at + TOOLS_MARKER.len()..].trim_start();
    let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<serde_json::Value>();
    match stream.next() {
        Some(Ok(serde_json::Value::Array(items))) => items
            .iter()
            .filter_map(|t| t.get("name")?.as_str().map(str::to_string))
            .collect(),
        _ => BTreeSet::new(),
    }
}
