//! Run try/check/retry against a live OpenAI-compatible endpoint.
//!
//!     TOOLDC_ENDPOINT=http://localhost:8000/v1 TOOLDC_MODEL=qwen2.5-7b-instruct \
//!         cargo run --example openai_endpoint -- simple_0
//!
//! The API key is read from the variable named by TOOLDC_API_KEY_VAR
//! (OPENAI_API_KEY by default); local servers usually need none.

use std::sync::Arc;

use tooldc::cli::render_trace;
use tooldc::evalharness::{ast_match, load_dataset};
use tooldc::grouping::GroupingConfig;
use tooldc::llmport::{ChatDefaults, CompletionPort, HttpConfig, HttpPort, ENV_MODEL};
use tooldc::pipeline::{Pipeline, PipelineConfig, Strategy};

const DATASET: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/standard.jsonl"
));

#[tokio::main]
async fn main() {
    let cfg = match HttpConfig::from_env() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    let id = std::env::args().nth(1).unwrap_or_else(|| "simple_0".into());
    let dataset = load_dataset(DATASET.as_bytes()).unwrap();
    let inst = dataset
        .iter()
        .find(|i| i.id == id)
        .expect("unknown instance id");

    let port = Arc::new(HttpPort::new(cfg).unwrap());
    let chat = ChatDefaults {
        model: std::env::var(ENV_MODEL).unwrap_or_else(|_| ChatDefaults::default().model),
        ..ChatDefaults::default()
    };
    let pipeline = Pipeline::new(port.clone()).with_config(PipelineConfig {
        chat,
        ..PipelineConfig::default()
    });
    match pipeline
        .run_strategy(inst, Strategy::ToolDcTf(GroupingConfig::default()))
        .await
    {
        Ok(trace) => {
            render_trace(&trace, &mut std::io::stdout()).unwrap();
            println!(
                "match:       {}",
                ast_match(trace.final_answer.as_ref(), &inst.answers)
            );
        }
        Err(e) => eprintln!("error: {e}"),
    }
    let usage = port.usage();
    println!(
        "usage:       {} calls, {} prompt tokens, {} completion tokens",
        usage.calls, usage.prompt_tokens, usage.completion_tokens
    );
}
