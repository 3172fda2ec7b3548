//! Pad every library with distractors and watch accuracy as N grows, with
//! a scripted model that only copes with short tool lists.
//!
//!     cargo run --example extended_setting -- 7

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
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let dataset = load_dataset(DATASET.as_bytes()).unwrap();
    let pool = load_library(POOL.as_bytes()).unwrap();
    let strategies = [
        Strategy::AllFuns,
        Strategy::TopK { k: 5 },
        Strategy::ToolDcTf(GroupingConfig::default()),
    ];

    print!("{:>4}", "N");
    for s in &strategies {
        print!(" {:>14}", s.label());
    }
    println!();
    for n in (10..=50).step_by(10) {
        let injected = inject_dataset(&dataset, &pool, n, seed).unwrap();
        print!("{n:>4}");
        for &strategy in &strategies {
            let pipeline = Pipeline::new(model());
            let report = evaluate(&injected, strategy, &pipeline, &EvalConfig::default())
                .await
                .unwrap();
            print!(" {:>13.1}%", report.metrics.overall * 100.0);
        }
        println!();
    }
}
