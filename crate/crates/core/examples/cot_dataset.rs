//! Build chain-of-thought training records from the bundled raw corpus and
//! print the first one.

use std::sync::Arc;

use tooldc::cotforge::{load_raw_corpus, split_target, CotBuilder, CotRecord};
use tooldc::llmport::ScriptedMock;

const CORPUS: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/cot/raw_corpus.jsonl"
));
const MOCK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/cot/mock.json");

#[tokio::main]
async fn main() {
    let port = Arc::new(ScriptedMock::load(MOCK.as_ref()).unwrap());
    let builder = CotBuilder::new(port);
    let mut out = Vec::new();
    let counts = builder
        .build_dataset(load_raw_corpus(CORPUS), &mut out)
        .await
        .unwrap();
    println!("{counts:?}");

    let text = String::from_utf8(out).unwrap();
    if let Some(line) = text.lines().next() {
        let rec: CotRecord = serde_json::from_str(line).unwrap();
        let (rationale, call) = split_target(&rec.target).unwrap();
        println!("query:     {}", rec.query);
        println!("rationale: {rationale}");
        println!("answer:    {}", tooldc::serialize_invocations(&call));
    }
}
