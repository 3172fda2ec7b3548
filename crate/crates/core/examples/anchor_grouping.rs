//! Show how a ranked library is split into anchor groups.
//!
//!     cargo run --example anchor_grouping -- 5 4

use tooldc::grouping::{build_plan, GroupingConfig};
use tooldc::load_library;
use tooldc::retrieval::{bm25_rank, Bm25Params};

const POOL: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/distractor_pool.json"
));

fn main() {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let cap: Option<usize> = args.next().and_then(|a| a.parse().ok());

    let lib = load_library(POOL.as_bytes()).unwrap();
    let query = "book a flight and a hotel in Rome";
    let ranked = bm25_rank(query, &lib, Bm25Params::default()).unwrap();
    let plan = build_plan(
        &ranked,
        lib.len(),
        &GroupingConfig {
            k,
            max_group_size: cap,
        },
    );

    let name = |p: usize| lib.tools()[p].name.as_str();
    println!("query: {query}");
    println!("{} tools, K = {}, cap = {cap:?}", lib.len(), plan.k());
    for g in &plan.groups {
        let label = match g.anchor {
            Some(a) => format!("anchor {}", name(a)),
            None => "top-K".to_string(),
        };
        let members: Vec<&str> = g.members.iter().map(|&p| name(p)).collect();
        println!(
            "S{} [{label}] {} tools: {}",
            g.index,
            g.members.len(),
            members.join(", ")
        );
    }
    println!("completions per query: {}", plan.groups.len() + 1);
}
