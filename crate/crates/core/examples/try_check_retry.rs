//! One query through try/check/retry against a scripted model, with the
//! per-group trace.

use std::sync::Arc;

use tooldc::cli::render_trace;
use tooldc::evalharness::load_dataset;
use tooldc::grouping::GroupingConfig;
use tooldc::llmport::{CompletionPort, ScriptedMock};
use tooldc::pipeline::{Pipeline, Strategy};

const DATASET: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/standard.jsonl"
));
const MOCK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/standard_mock.json");

#[tokio::main]
async fn main() {
    let id = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "multiple_0".into());
    let dataset = load_dataset(DATASET.as_bytes()).unwrap();
    let Some(inst) = dataset.iter().find(|i| i.id == id) else {
        eprintln!(
            "no instance `{id}`; try one of: {}",
            dataset
                .iter()
                .map(|i| i.id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
        std::process::exit(1);
    };

    let port = Arc::new(ScriptedMock::load(MOCK.as_ref()).unwrap());
    let pipeline = Pipeline::new(port.clone());
    let trace = pipeline
        .run_strategy(inst, Strategy::ToolDcTf(GroupingConfig::default()))
        .await
        .unwrap();

    println!("query:       {}", inst.query);
    render_trace(&trace, &mut std::io::stdout()).unwrap();
    println!("port calls:  {}", port.usage().calls);
}
