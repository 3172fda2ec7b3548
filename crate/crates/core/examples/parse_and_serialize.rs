//! Parse model output in the `[f(a=1), g(b="x")]` format and print its
//! canonical form.
//!
//!     cargo run --example parse_and_serialize -- '[get_weather(city="Paris", days=3)]'

use tooldc::{parse_invocations, serialize_invocations, ParseOutcome};

fn main() {
    let inputs: Vec<String> = match std::env::args().skip(1).collect::<Vec<_>>() {
        args if !args.is_empty() => args,
        _ => vec![
            r#"[get_weather(city="Paris", days=3)]"#.into(),
            "```\n[math.add(a=1,b=2.50), now()]\n```".into(),
            r#"[plot(points=[[1, 2], [3, 4]], style={'color': 'red', 'dash': None}, show=True)]"#
                .into(),
            "I don't know which function fits.".into(),
            "[broken(a=)]".into(),
        ],
    };
    for raw in inputs {
        println!("input:     {raw}");
        match parse_invocations(&raw) {
            ParseOutcome::Parsed(list) => {
                println!("calls:     {}", list.calls.len());
                for call in &list.calls {
                    let keys: Vec<&str> = call.args.keys().map(String::as_str).collect();
                    println!("  {} ({})", call.name, keys.join(", "));
                }
                println!("canonical: {}", serialize_invocations(&list));
            }
            ParseOutcome::Null(reason) => println!("null:      {reason}"),
        }
        println!();
    }
}
