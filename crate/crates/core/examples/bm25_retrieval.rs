//! Rank a tool library against a query with BM25.
//!
//!     cargo run --example bm25_retrieval -- "convert 100 dollars to euros"

use tooldc::load_library;
use tooldc::retrieval::{bm25_rank, tokenize, Bm25Params};

const POOL: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/distractor_pool.json"
));

fn main() {
    let query = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "convert 100 dollars to euros at today's exchange rate".into());
    let lib = load_library(POOL.as_bytes()).expect("pool fixture is valid");
    let ranked = bm25_rank(&query, &lib, Bm25Params::default()).expect("library is not empty");

    println!("query tokens: {:?}", tokenize(&query));
    println!("{} tools, top 10:", lib.len());
    for (rank, e) in ranked.entries.iter().take(10).enumerate() {
        println!(
            "{:>3}. {:<32} {:.4}",
            rank + 1,
            lib.tools()[e.position].name,
            e.score
        );
    }
}
