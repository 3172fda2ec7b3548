//! Try-check-retry orchestration and the single-shot baselines.
//!
//! For the divide-and-conquer strategy one query costs K+1 try completions
//! (one per group) plus one retry completion over the tools named by the
//! valid try outcomes. The retry is skipped, and the answer is null, when
//! no try outcome survives the check.

use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::callgrammar::{parse_invocations, ParseOutcome};
use crate::evalharness::EvalInstance;
use crate::grouping::{build_plan, GroupingConfig, GroupingPlan, ToolGroup};
use crate::llmport::{ChatDefaults, CompletionPort, PortError};
use crate::prompts;
use crate::retrieval::{top_k, Bm25Retriever, RetrievalError, Retriever};
use crate::schema::{render_tools, InvocationList, ToolDefinition, ToolLibrary};
use crate::validator::{check, ValidationReport};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("every try group failed at the transport level: {0}")]
    AllGroupsFailed(String),
    #[error("final completion failed: {0}")]
    Port(#[from] PortError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("instance `{0}` has no ground-truth tool names")]
    MissingGolden(String),
    #[error("ground-truth tool `{0}` is not in the library")]
    UnknownGolden(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Try-check-retry over anchor groups.
    ToolDcTf(GroupingConfig),
    /// One completion with the whole library.
    AllFuns,
    /// One completion with the retriever's top `k` tools.
    TopK { k: usize },
    /// One completion with only the ground-truth tools.
    GtFuns,
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::ToolDcTf(cfg) => format!("tooldc(k={})", cfg.k),
            Strategy::AllFuns => "all_funs".into(),
            Strategy::TopK { k } => format!("top_k(k={k})"),
            Strategy::GtFuns => "gt_funs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub chat: ChatDefaults,
    /// Completions in flight per query.
    pub concurrency: usize,
    /// With no valid try outcome, answer with one whole-library completion
    /// instead of returning null.
    pub fallback_all_funs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chat: ChatDefaults::default(),
            concurrency: 8,
            fallback_all_funs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrace {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    pub members: Vec<usize>,
    pub tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
    pub outcome: ParseOutcome,
    pub report: ValidationReport,
}

/// A single completion over a fixed tool list: the retry stage, or the only
/// stage of a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub tools: Vec<usize>,
    pub tool_names: Vec<String>,
    pub raw: String,
    pub outcome: ParseOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub instance_id: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub groups: Vec<GroupTrace>,
    #[serde(default)]
    pub retry_tools: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_stage: Option<StageTrace>,
    /// `None` is the null answer.
    pub final_answer: Option<InvocationList>,
    pub completion_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunTrace {
    fn new(instance_id: &str, strategy: Strategy) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            strategy,
            groups: Vec::new(),
            retry_tools: Vec::new(),
            final_stage: None,
            final_answer: None,
            completion_calls: 0,
            error: None,
        }
    }

    /// Trace for a run that ended in a [`PipelineError`].
    pub fn failed(instance_id: &str, strategy: Strategy, err: &PipelineError) -> Self {
        Self {
            error: Some(err.to_string()),
            ..Self::new(instance_id, strategy)
        }
    }
}

/// Unique tool names called anywhere in `valid`, resolved to library
/// positions in order of first appearance.
pub fn build_retry_set<'a>(
    valid: impl IntoIterator<Item = &'a InvocationList>,
    lib: &ToolLibrary,
) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for list in valid {
        for call in &list.calls {
            if let Some(pos) = lib.position(&call.name) {
                if !out.contains(&pos) {
                    out.push(pos);
                }
            }
        }
    }
    out
}

fn final_answer(outcome: &ParseOutcome) -> Option<InvocationList> {
    outcome.calls().filter(|l| !l.is_null()).cloned()
}

pub struct Pipeline {
    port: Arc<dyn CompletionPort>,
    retriever: Arc<dyn Retriever>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(port: Arc<dyn CompletionPort>) -> Self {
        Self {
            port,
            retriever: Arc::new(Bm25Retriever::default()),
            config: PipelineConfig::default(),
        }
    }

    pub fn with_retriever(mut self, retriever: Arc<dyn Retriever>) -> Self {
        self.retriever = retriever;
        self
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn port(&self) -> &Arc<dyn CompletionPort> {
        &self.port
    }

    /// Grouping plan for a query, ranking with the configured retriever.
    pub fn plan(
        &self,
        query: &str,
        lib: &ToolLibrary,
        cfg: &GroupingConfig,
    ) -> Result<GroupingPlan, PipelineError> {
        let ranked = self.retriever.rank(query, lib)?;
        Ok(build_plan(&ranked, lib.len(), cfg))
    }

    async fn try_group(&self, query: &str, lib: &ToolLibrary, group: &ToolGroup) -> GroupTrace {
        let tools: Vec<ToolDefinition> = group
            .members
            .iter()
            .map(|&p| lib.tools()[p].clone())
            .collect();
        let req = self
            .config
            .chat
            .request(prompts::try_system(&render_tools(&tools)), query);
        let (raw, transport_error, outcome) = match self.port.complete(&req).await {
            Ok(text) => {
                let outcome = parse_invocations(&text);
                (Some(text), None, outcome)
            }
            Err(e) => (None, Some(e.to_string()), ParseOutcome::Null(String::new())),
        };
        let report = check(&outcome, &tools);
        GroupTrace {
            index: group.index,
            anchor: group.anchor,
            members: group.members.clone(),
            tools: tools.into_iter().map(|t| t.name).collect(),
            raw,
            transport_error,
            outcome,
            report,
        }
    }

    /// Try stage: one completion per group, concurrently, results in group
    /// order. A transport failure turns that group's outcome into null; if
    /// every group fails the whole stage fails.
    pub async fn run_try(
        &self,
        query: &str,
        groups: &[ToolGroup],
        lib: &ToolLibrary,
    ) -> Result<Vec<GroupTrace>, PipelineError> {
        let traces: Vec<GroupTrace> = stream::iter(groups)
            .map(|g| self.try_group(query, lib, g))
            .buffered(self.config.concurrency.max(1))
            .collect()
            .await;
        if !traces.is_empty() && traces.iter().all(|t| t.transport_error.is_some()) {
            return Err(PipelineError::AllGroupsFailed(
                traces[0].transport_error.clone().unwrap_or_default(),
            ));
        }
        Ok(traces)
    }

    /// One completion with the retry prompt over `positions`.
    pub async fn run_retry(
        &self,
        query: &str,
        positions: &[usize],
        lib: &ToolLibrary,
    ) -> Result<StageTrace, PipelineError> {
        let tools: Vec<ToolDefinition> =
            positions.iter().map(|&p| lib.tools()[p].clone()).collect();
        let req = self
            .config
            .chat
            .request(prompts::retry_system(&render_tools(&tools)), query);
        let raw = self.port.complete(&req).await?;
        Ok(StageTrace {
            tools: positions.to_vec(),
            tool_names: tools.into_iter().map(|t| t.name).collect(),
            outcome: parse_invocations(&raw),
            raw,
        })
    }

    async fn single_shot(
        &self,
        trace: &mut RunTrace,
        query: &str,
        positions: &[usize],
        lib: &ToolLibrary,
    ) -> Result<(), PipelineError> {
        trace.completion_calls += 1;
        let stage = self.run_retry(query, positions, lib).await?;
        trace.final_answer = final_answer(&stage.outcome);
        trace.final_stage = Some(stage);
        Ok(())
    }

    pub async fn run_strategy(
        &self,
        instance: &EvalInstance,
        strategy: Strategy,
    ) -> Result<RunTrace, PipelineError> {
        let lib = &instance.library;
        let query = instance.query.as_str();
        let mut trace = RunTrace::new(&instance.id, strategy);
        match strategy {
            Strategy::ToolDcTf(cfg) => {
                let plan = self.plan(query, lib, &cfg)?;
                trace.completion_calls += plan.groups.len();
                trace.groups = self.run_try(query, &plan.groups, lib).await?;
                let valid = trace
                    .groups
                    .iter()
                    .filter(|g| g.report.valid)
                    .filter_map(|g| g.outcome.calls());
                trace.retry_tools = build_retry_set(valid, lib);
                if !trace.retry_tools.is_empty() {
                    let retry = trace.retry_tools.clone();
                    self.single_shot(&mut trace, query, &retry, lib).await?;
                } else if self.config.fallback_all_funs {
                    let all: Vec<usize> = (0..lib.len()).collect();
                    self.single_shot(&mut trace, query, &all, lib).await?;
                }
            }
            Strategy::AllFuns => {
                let all: Vec<usize> = (0..lib.len()).collect();
                self.single_shot(&mut trace, query, &all, lib).await?;
            }
            Strategy::TopK { k } => {
                let ranked = self.retriever.rank(query, lib)?;
                let top = top_k(&ranked, k.max(1));
                self.single_shot(&mut trace, query, &top, lib).await?;
            }
            Strategy::GtFuns => {
                let golden = instance.golden_positions()?;
                self.single_shot(&mut trace, query, &golden, lib).await?;
            }
        }
        Ok(trace)
    }
}
