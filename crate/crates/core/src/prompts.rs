//! Prompt templates for the try stage, the retry stage (also used by the
//! single-shot baselines) and CoT data construction. `<Tools>` is filled
//! with the JSON rendering of a tool list; the question always goes in the
//! user message unchanged.

pub const TRY_TEMPLATE: &str = include_str!("prompt_text/try.txt");
pub const RETRY_TEMPLATE: &str = include_str!("prompt_text/retry.txt");
pub const COT_SYSTEM_TEMPLATE: &str = include_str!("prompt_text/cot_system.txt");
pub const RATIONALE_TEMPLATE: &str = include_str!("prompt_text/rationale.txt");

/// Line that precedes the embedded tool list in every system prompt.
pub const TOOLS_MARKER: &str = "Here is a list of functions in json format that you can invoke.";

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";

const TOOLS_SLOT: &str = "<Tools>";

pub fn try_system(tools_json: &str) -> String {
    TRY_TEMPLATE.replace(TOOLS_SLOT, tools_json)
}

pub fn retry_system(tools_json: &str) -> String {
    RETRY_TEMPLATE.replace(TOOLS_SLOT, tools_json)
}

pub fn cot_system(tools_json: &str) -> String {
    COT_SYSTEM_TEMPLATE.replace(TOOLS_SLOT, tools_json)
}

/// The three-part reasoning text placed between the think tags.
pub fn rationale(candidate_tool_calls: &str, valid_tools: &str) -> String {
    RATIONALE_TEMPLATE
        .replace("<candidate_tool_calls>", candidate_tool_calls)
        .replace("<valid_tools>", valid_tools)
}
