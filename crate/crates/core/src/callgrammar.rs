//! The bracketed invocation text format models are asked to emit:
//!
//! ```text
//! list    := '[' (call (',' call)*)? ']'
//! call    := dotted_ident '(' (kwarg (',' kwarg)*)? ')'
//! kwarg   := ident '=' literal
//! literal := string | integer | float | True | False | true | false | None | null
//!          | '[' (literal (',' literal)*)? ']'
//!          | '{' (string ':' literal (',' string ':' literal)*)? '}'
//! ```
//!
//! Parsing is total: anything that does not conform folds into
//! [`ParseOutcome::Null`] carrying the raw text.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::schema::{InvocationList, ToolInvocation, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Parsed(InvocationList),
    Null(String),
}

impl ParseOutcome {
    /// The calls, if parsing succeeded.
    pub fn calls(&self) -> Option<&InvocationList> {
        match self {
            ParseOutcome::Parsed(list) => Some(list),
            ParseOutcome::Null(_) => None,
        }
    }

    /// True for `Null` and for an empty parsed list.
    pub fn is_null(&self) -> bool {
        self.calls().is_none_or(InvocationList::is_null)
    }

    pub fn into_calls(self) -> Option<InvocationList> {
        match self {
            ParseOutcome::Parsed(list) => Some(list),
            ParseOutcome::Null(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OutcomeRepr {
    Parsed(String),
    Null(String),
}

impl Serialize for ParseOutcome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ParseOutcome::Parsed(list) => OutcomeRepr::Parsed(serialize_invocations(list)),
            ParseOutcome::Null(raw) => OutcomeRepr::Null(raw.clone()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParseOutcome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match OutcomeRepr::deserialize(deserializer)? {
            OutcomeRepr::Parsed(text) => match parse_invocations(&text) {
                parsed @ ParseOutcome::Parsed(_) => Ok(parsed),
                ParseOutcome::Null(_) => Err(serde::de::Error::custom(format!(
                    "stored invocation text does not parse: {text}"
                ))),
            },
            OutcomeRepr::Null(raw) => Ok(ParseOutcome::Null(raw)),
        }
    }
}

/// Invocation lists travel through JSON files as their canonical text.
impl Serialize for InvocationList {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&serialize_invocations(self))
    }
}

impl<'de> Deserialize<'de> for InvocationList {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_invocations(&text)
            .into_calls()
            .ok_or_else(|| serde::de::Error::custom(format!("not an invocation list: {text}")))
    }
}

/// Parses model output into calls.
///
/// Surrounding whitespace and a single outer ``` fence are tolerated. When
/// the response holds several bracket blocks only the first is kept, but
/// every trailing block must itself be well formed; any other trailing text
/// yields `Null`.
pub fn parse_invocations(raw: &str) -> ParseOutcome {
    match parse_document(raw) {
        Some(list) => ParseOutcome::Parsed(list),
        None => ParseOutcome::Null(raw.to_string()),
    }
}

fn strip_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let Some(body) = rest.trim_end().strip_suffix("```") else {
        return trimmed;
    };
    // Opening fence may carry a language tag on its own line.
    match body.find('\n') {
        Some(nl) if !body[..nl].trim().contains('[') => &body[nl + 1..],
        _ => body,
    }
}

fn parse_document(raw: &str) -> Option<InvocationList> {
    let mut p = Parser::new(strip_fence(raw));
    p.skip_ws();
    let first = p.list()?;
    p.skip_ws();
    while !p.at_end() {
        p.list()?;
        p.skip_ws();
    }
    Some(first)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Option<()> {
        self.eat(c).then_some(())
    }

    /// Comma-separated items up to `close`; the opening token is already consumed.
    fn sequence<T>(
        &mut self,
        close: char,
        mut item: impl FnMut(&mut Self) -> Option<T>,
    ) -> Option<Vec<T>> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Some(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(close) {
                return Some(out);
            }
            self.expect(',')?;
        }
    }

    fn list(&mut self) -> Option<InvocationList> {
        self.expect('[')?;
        self.sequence(']', Self::call).map(InvocationList::new)
    }

    fn call(&mut self) -> Option<ToolInvocation> {
        self.skip_ws();
        let name = self.dotted_ident()?;
        self.expect('(')?;
        let kwargs = self.sequence(')', |p| {
            p.skip_ws();
            let key = p.ident()?;
            p.expect('=')?;
            Some((key.to_string(), p.literal()?))
        })?;
        let mut args = IndexMap::with_capacity(kwargs.len());
        for (key, value) in kwargs {
            if args.insert(key, value).is_some() {
                return None;
            }
        }
        Some(ToolInvocation {
            name: name.to_string(),
            args,
        })
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return None,
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.bump();
        }
        Some(&self.src[start..self.pos])
    }

    fn dotted_ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        self.ident()?;
        while self.peek() == Some('.') {
            self.bump();
            self.ident()?;
        }
        Some(&self.src[start..self.pos])
    }

    fn literal(&mut self) -> Option<Value> {
        self.skip_ws();
        match self.peek()? {
            '"' | '\'' => self.string().map(Value::Text),
            '[' => {
                self.bump();
                self.sequence(']', Self::literal).map(Value::List)
            }
            '{' => {
                self.bump();
                let pairs = self.sequence('}', |p| {
                    p.skip_ws();
                    let key = p.string()?;
                    p.expect(':')?;
                    Some((key, p.literal()?))
                })?;
                let mut map = IndexMap::with_capacity(pairs.len());
                for (k, v) in pairs {
                    if map.insert(k, v).is_some() {
                        return None;
                    }
                }
                Some(Value::Map(map))
            }
            c if c.is_ascii_digit() || matches!(c, '+' | '-' | '.') => self.number(),
            _ => match self.ident()? {
                "True" | "true" => Some(Value::Bool(true)),
                "False" | "false" => Some(Value::Bool(false)),
                "None" | "null" => Some(Value::Null),
                _ => None,
            },
        }
    }

    fn number(&mut self) -> Option<Value> {
        let start = self.pos;
        if matches!(self.peek(), Some('+' | '-')) {
            self.bump();
        }
        let mut digits = 0;
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits += 1;
            } else if c == '.' && !is_float {
                is_float = true;
            } else {
                break;
            }
            self.bump();
        }
        if digits == 0 {
            return None;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            is_float = true;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            let exp_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            if self.pos == exp_start {
                return None;
            }
        }
        let text = &self.src[start..self.pos];
        if is_float {
            let f: f64 = text.parse().ok()?;
            f.is_finite().then_some(Value::Float(f))
        } else {
            text.parse().ok().map(Value::Int)
        }
    }

    fn hex_escape(&mut self, len: usize) -> Option<char> {
        let start = self.pos;
        for _ in 0..len {
            if !self.bump()?.is_ascii_hexdigit() {
                return None;
            }
        }
        char::from_u32(u32::from_str_radix(&self.src[start..self.pos], 16).ok()?)
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.bump()?;
        if quote != '"' && quote != '\'' {
            return None;
        }
        let mut out = String::new();
        loop {
            match self.bump()? {
                c if c == quote => return Some(out),
                '\\' => match self.bump()? {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '0' => out.push('\0'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    'x' => out.push(self.hex_escape(2)?),
                    'u' => out.push(self.hex_escape(4)?),
                    'U' => out.push(self.hex_escape(8)?),
                    // Unknown escapes keep the backslash, as Python does.
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                },
                c => out.push(c),
            }
        }
    }
}

/// Canonical text: double-quoted strings, `True`/`False`/`None`, `", "`
/// between items.
pub fn serialize_invocations(list: &InvocationList) -> String {
    let mut out = String::from("[");
    for (i, call) in list.calls.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_call(&mut out, call);
    }
    out.push(']');
    out
}

pub fn serialize_call(call: &ToolInvocation) -> String {
    let mut out = String::new();
    write_call(&mut out, call);
    out
}

pub fn serialize_value(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_call(out: &mut String, call: &ToolInvocation) {
    out.push_str(&call.name);
    out.push('(');
    for (i, (key, value)) in call.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(key);
        out.push('=');
        write_value(out, value);
    }
    out.push(')');
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Text(s) => write_string(out, s),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        // `{:?}` is the shortest round-tripping form and always keeps a `.` or exponent.
        Value::Float(f) => {
            let _ = write!(out, "{f:?}");
        }
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Null => out.push_str("None"),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Map(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(out, k);
                out.push_str(": ");
                write_value(out, v);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(raw: &str) -> InvocationList {
        match parse_invocations(raw) {
            ParseOutcome::Parsed(list) => list,
            ParseOutcome::Null(_) => panic!("expected parse of {raw:?}"),
        }
    }

    fn text(s: &str) -> Value {
        Value::Text(s.into())
    }

    #[test]
    fn single_call() {
        let list = parsed(r#"[get_weather(city="Paris", days=3)]"#);
        assert_eq!(
            list,
            InvocationList::new(vec![ToolInvocation::new("get_weather")
                .arg("city", text("Paris"))
                .arg("days", Value::Int(3))])
        );
    }

    #[test]
    fn refusal_is_null() {
        assert_eq!(
            parse_invocations("I cannot help with that."),
            ParseOutcome::Null("I cannot help with that.".into())
        );
    }

    // Expected structure frozen from Python's ast.literal_eval on the same argument literals:
    // [1, 2.5, 'x,y'] and True.
    #[test]
    fn mixed_literals_and_zero_arg_call() {
        let list = parsed(r#"[f(a=[1, 2.5, "x,y"], b=True), g()]"#);
        assert_eq!(
            list.calls,
            vec![
                ToolInvocation::new("f")
                    .arg(
                        "a",
                        Value::List(vec![Value::Int(1), Value::Float(2.5), text("x,y")])
                    )
                    .arg("b", Value::Bool(true)),
                ToolInvocation::new("g"),
            ]
        );
    }

    #[test]
    fn strings_may_hold_delimiters() {
        let list = parsed(r#"[f(q='a(b)[c], d=e', r="it's \"x\"")]"#);
        assert_eq!(list.calls[0].args["q"], text("a(b)[c], d=e"));
        assert_eq!(list.calls[0].args["r"], text("it's \"x\""));
    }

    #[test]
    fn numbers() {
        let list = parsed("[f(a=-3, b=+4, c=1e3, d=-2.5E-2, e=.5, g=7.)]");
        let args = &list.calls[0].args;
        assert_eq!(args["a"], Value::Int(-3));
        assert_eq!(args["b"], Value::Int(4));
        assert_eq!(args["c"], Value::Float(1000.0));
        assert_eq!(args["d"], Value::Float(-0.025));
        assert_eq!(args["e"], Value::Float(0.5));
        assert_eq!(args["g"], Value::Float(7.0));
    }

    #[test]
    fn integer_overflow_is_null() {
        assert!(matches!(
            parse_invocations("[f(a=99999999999999999999)]"),
            ParseOutcome::Null(_)
        ));
    }

    #[test]
    fn keywords_and_maps() {
        let list = parsed(r#"[ns.f(a=None, b=null, c=false, d={"k": [true], 'j': {}})]"#);
        let call = &list.calls[0];
        assert_eq!(call.name, "ns.f");
        assert_eq!(call.args["a"], Value::Null);
        assert_eq!(call.args["b"], Value::Null);
        assert_eq!(call.args["c"], Value::Bool(false));
        let Value::Map(m) = &call.args["d"] else {
            panic!()
        };
        assert_eq!(m["k"], Value::List(vec![Value::Bool(true)]));
        assert_eq!(m["j"], Value::Map(IndexMap::new()));
    }

    #[test]
    fn fenced_output() {
        let list = parsed("```python\n[f(a=1)]\n```");
        assert_eq!(list.calls.len(), 1);
        let list = parsed("```[f(a=1)]```");
        assert_eq!(list.calls.len(), 1);
    }

    #[test]
    fn first_block_wins() {
        let list = parsed("[f(a=1)]\n[g(b=2)]");
        assert_eq!(list.calls[0].name, "f");
        assert_eq!(list.calls.len(), 1);
    }

    #[test]
    fn surrounding_prose_is_null() {
        for raw in [
            "Sure! [f(a=1)]",
            "[f(a=1)] hope this helps",
            "[f(a=1)] [g(",
            "",
            "[f(a=1)",
            "[f(1)]",
            "[f(a=1,)]",
            "[f(a=1, a=2)]",
            "[f(a=g(b=1))]",
            "[f(a=x)]",
            "[f(a={1: 2})]",
            "[f(a=1 + 2)]",
            "[1f(a=1)]",
        ] {
            assert!(
                matches!(parse_invocations(raw), ParseOutcome::Null(_)),
                "{raw:?} should be Null"
            );
        }
    }

    #[test]
    fn empty_list_parses() {
        assert_eq!(parsed(" [ ] "), InvocationList::default());
        assert!(parse_invocations("[]").is_null());
    }

    #[test]
    fn escapes() {
        let list = parsed(r#"[f(a="tab\there\nnl \u00e9 \x41 C:\path")]"#);
        assert_eq!(list.calls[0].args["a"], text("tab\there\nnl é A C:\\path"));
    }

    #[test]
    fn serialize_canonical() {
        assert_eq!(serialize_invocations(&InvocationList::default()), "[]");
        let one = InvocationList::new(vec![ToolInvocation::new("f").arg("a", Value::Int(1))]);
        assert_eq!(serialize_invocations(&one), "[f(a=1)]");
        let list = parsed("[f( a = 'x' ,b=[1,2.0,None],c={'k':true}),g()]");
        assert_eq!(
            serialize_invocations(&list),
            r#"[f(a="x", b=[1, 2.0, None], c={"k": True}), g()]"#
        );
    }

    #[test]
    fn control_chars_round_trip() {
        let call = ToolInvocation::new("f").arg("a", text("\u{1}\u{7f}\"\\"));
        let list = InvocationList::new(vec![call]);
        let s = serialize_invocations(&list);
        assert_eq!(s, r#"[f(a="\u0001\u007f\"\\")]"#);
        assert_eq!(parsed(&s), list);
    }

    #[test]
    fn outcome_serde() {
        let outcome = parse_invocations("[f(a=1.0)]");
        let json = serde_json::to_string(&outcome).unwrap();
        assert_eq!(json, r#"{"parsed":"[f(a=1.0)]"}"#);
        let back: ParseOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, outcome);
        let null: ParseOutcome = serde_json::from_str(r#"{"null":"nope"}"#).unwrap();
        assert_eq!(null, ParseOutcome::Null("nope".into()));
    }
}
