//! Divide-and-conquer tool calling for language models facing long, noisy
//! candidate-tool lists.
//!
//! The library splits a tool library into small anchored groups, asks the
//! model for a call inside each group, keeps only calls that are consistent
//! with their schemas, and asks once more with just the surviving tools
//! ("try, check, retry"). Around that core it provides the pieces needed to
//! measure and train the approach:
//!
//! - [`schema`]: tool definitions, argument values, JSON library ingestion
//! - [`callgrammar`]: the `[f(a=1), g(b="x")]` call format models answer in
//! - [`retrieval`]: BM25 ranking of tools against a query
//! - [`grouping`]: anchor-group planning
//! - [`validator`]: schema consistency checks on candidate calls
//! - [`llmport`]: completion port, with an OpenAI-compatible HTTP client and a scripted mock
//! - [`pipeline`]: try/check/retry and the single-shot baselines
//! - [`evalharness`]: datasets, distractor injection, AST exact-match scoring
//! - [`cotforge`]: chain-of-thought training data construction
//! - [`cli`]: the `tooldc` command line

pub mod callgrammar;
pub mod cli;
pub mod cotforge;
pub mod evalharness;
pub mod grouping;
pub mod llmport;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod schema;
pub mod validator;

pub use callgrammar::{parse_invocations, serialize_invocations, ParseOutcome};
pub use schema::{
    load_library, render_library, InvocationList, ParamSpec, ParamType, ToolDefinition,
    ToolInvocation, ToolLibrary, Value,
};
