//! Score every strategy on the bundled dataset padded to 30 tools, with a
//! scripted model that only copes with short tool lists.

use std::sync::Arc;

use async_trait::async_trait;

use tooldc::evalharness::{evaluate, inject_dataset, load_dataset, EvalConfig};
use tooldc::grouping::GroupingConfig;
use tooldc::llmport::{
    extract_tool_names, ChatRequest, CompletionPort, PortError, ScriptedMock, Usage,
};
use tooldc::load_library;
use tooldc::pipeline::{Pipeline, Strategy};

const DATASET: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/standard.jsonl"
));
const POOL: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/distractor_pool.json"
));
const MOCK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/standard_mock.json");

/// The scripted model, except that with more than `span` tools in view it
/// loses track and calls the alphabetically first one with no arguments.
struct Distractible {
    inner: ScriptedMock,
    span: usize,
}

#[async_trait]
impl CompletionPort for Distractible {
    async fn complete(&self, req: &ChatRequest) -> Result<String, PortError> {
        let tools = extract_tool_names(&req.system);
        if tools.len() > self.span {
            let first = tools.into_iter().next().unwrap_or_default();
            self.inner.complete(req).await?;
            return Ok(format!("[{first}()]"));
        }
        self.inner.complete(req).await
    }

    fn usage(&self) -> Usage {
        self.inner.usage()
    }
}

fn model() -> Arc<Distractible> {
    Arc::new(Distractible {
        inner: ScriptedMock::load(MOCK.as_ref()).unwrap(),
        span: 12,
    })
}

#[tokio::main]
async fn main() {
    let pool = load_library(POOL.as_bytes()).unwrap();
    let dataset = inject_dataset(&load_dataset(DATASET.as_bytes()).unwrap(), &pool, 30, 0).unwrap();
    let strategies = [
        Strategy::AllFuns,
        Strategy::TopK { k: 3 },
        Strategy::ToolDcTf(GroupingConfig::default()),
        Strategy::GtFuns,
    ];
    println!("{} instances, 30 tools each", dataset.len());
    println!(
        "{:<16} {:>8} {:>9} {:>10}",
        "strategy", "overall", "matched", "calls"
    );
    for strategy in strategies {
        let port = model();
        let pipeline = Pipeline::new(port.clone());
        let report = evaluate(&dataset, strategy, &pipeline, &EvalConfig::default())
            .await
            .unwrap();
        let m = &report.metrics;
        println!(
            "{:<16} {:>7.1}% {:>9} {:>10}",
            strategy.label(),
            m.overall * 100.0,
            format!("{}/{}", m.matched, m.scored),
            port.usage().calls
        );
    }
}
