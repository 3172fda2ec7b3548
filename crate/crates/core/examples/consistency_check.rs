//! Check candidate calls against the schemas they were produced from.

use tooldc::validator::check;
use tooldc::{parse_invocations, ParamSpec, ParamType, ToolDefinition};

fn main() {
    let tools = vec![
        ToolDefinition::new(
            "get_weather",
            "Weather forecast for a city.",
            vec![
                ParamSpec::new("city", ParamType::String, true),
                ParamSpec::new("days", ParamType::Integer, false),
            ],
        )
        .unwrap(),
        ToolDefinition::new(
            "convert_currency",
            "Convert an amount between currencies.",
            vec![
                ParamSpec::new("amount", ParamType::Float, true),
                ParamSpec::new("from", ParamType::String, true),
                ParamSpec::new("to", ParamType::String, true),
            ],
        )
        .unwrap(),
    ];

    let candidates = [
        r#"[get_weather(city="Paris", days=3)]"#,
        r#"[convert_currency(amount=100, from="USD", to="EUR")]"#,
        r#"[get_weather(days="three")]"#,
        r#"[get_weather(town="Paris")]"#,
        r#"[book_flight(to="Rome")]"#,
        "No function applies.",
    ];
    for raw in candidates {
        let report = check(&parse_invocations(raw), &tools);
        println!(
            "{:<7} {raw}",
            if report.valid { "valid" } else { "invalid" }
        );
        for reason in &report.reasons {
            println!("        - {reason}");
        }
    }
}
