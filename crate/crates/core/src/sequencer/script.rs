//! Line-oriented `.nms` script parser.
//!
//! ```text
//! # comments run to end of line
//! seed 42
//! tick 0.02
//! at 0 /scene/frag1 set gmn "[c d e f]"
//! ramp 0 10 /scene/frag1 alpha 0 255
//! randomwalk 0 5 /scene/frag1 x -0.2 0.2 0.01
//! ```

use num_traits::Signed;
use thiserror::Error;

use super::{EventKind, Timeline, TimelineEvent};
use crate::gmn;
use crate::osc::{OscArg, OscMessage, ScalarKind};
use crate::rational::{self, Rational};
use crate::scene::{self, Attr, PayloadSpec, SceneError, TRANSPORT_ADDRESS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown attribute {name:?}")]
    UnknownAttribute { line: usize, column: usize, name: String },
    #[error("{line}: ramp ends at {end} s, not after its start at {start} s")]
    RampBackwards { line: usize, start: String, end: String },
}

impl ScriptError {
    pub fn line(&self) -> usize {
        match self {
            ScriptError::Syntax { line, .. }
            | ScriptError::UnknownAttribute { line, .. }
            | ScriptError::RampBackwards { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    quoted: bool,
    column: usize,
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ScriptError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().enumerate().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            break;
        }
        let column = i + 1;
        if c == '"' {
            chars.next();
            let mut text = String::new();
            loop {
                match chars.next() {
                    None => {
                        return Err(ScriptError::Syntax {
                            line: line_no,
                            column,
                            message: "unterminated string".into(),
                        })
                    }
                    Some((_, '"')) => break,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, e @ ('"' | '\\'))) => text.push(e),
                        Some((_, other)) => {
                            text.push('\\');
                            text.push(other);
                        }
                        None => text.push('\\'),
                    },
                    Some((_, ch)) => text.push(ch),
                }
            }
            tokens.push(Token {
                text,
                quoted: true,
                column,
            });
        } else {
            let mut text = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_whitespace() || ch == '"' {
                    break;
                }
                text.push(ch);
                chars.next();
            }
            tokens.push(Token {
                text,
                quoted: false,
                column,
            });
        }
    }
    Ok(tokens)
}

struct LineParser<'a> {
    line: usize,
    tokens: &'a [Token],
    /// Column just past the line, for "missing argument" errors.
    end_column: usize,
}

impl LineParser<'_> {
    fn error(&self, column: usize, message: impl Into<String>) -> ScriptError {
        ScriptError::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn token(&self, index: usize, what: &str) -> Result<&Token, ScriptError> {
        self.tokens
            .get(index)
            .ok_or_else(|| self.error(self.end_column, format!("expected {what}")))
    }

    fn decimal(&self, index: usize, what: &str) -> Result<Rational, ScriptError> {
        let token = self.token(index, what)?;
        if token.quoted {
            return Err(self.error(token.column, format!("expected {what}, found a string")));
        }
        rational::parse_decimal(&token.text)
            .ok_or_else(|| self.error(token.column, format!("expected {what}, found {:?}", token.text)))
    }

    fn time(&self, index: usize) -> Result<Rational, ScriptError> {
        let t = self.decimal(index, "a time in seconds")?;
        if t.is_negative() {
            return Err(self.error(self.tokens[index].column, "times must not be negative"));
        }
        Ok(t)
    }

    fn address(&self, index: usize) -> Result<String, ScriptError> {
        let token = self.token(index, "an address")?;
        let valid = token.text == TRANSPORT_ADDRESS
            || token.text.strip_prefix("/scene/").is_some_and(|name| {
                !name.is_empty()
                    && name
                        .bytes()
                        .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'*')
            });
        if !valid {
            return Err(self.error(
                token.column,
                format!(
                    "bad address {:?}: expected /scene/<name> or {TRANSPORT_ADDRESS}",
                    token.text
                ),
            ));
        }
        Ok(token.text.clone())
    }

    fn expect_len(&self, count: usize) -> Result<(), ScriptError> {
        match self.tokens.get(count) {
            Some(extra) => Err(self.error(extra.column, format!("unexpected {:?}", extra.text))),
            None => Ok(()),
        }
    }

    fn attribute(&self, index: usize, rampable: bool) -> Result<(Attr, ScalarKind), ScriptError> {
        let token = self.token(index, "an attribute")?;
        let unknown = || ScriptError::UnknownAttribute {
            line: self.line,
            column: token.column,
            name: token.text.clone(),
        };
        let attr = Attr::from_name(&token.text).ok_or_else(unknown)?;
        match attr.scalar_kind() {
            Some(kind @ (ScalarKind::Float | ScalarKind::Byte)) if rampable => Ok((attr, kind)),
            _ => Err(self.error(token.column, format!("attribute {attr} cannot be ramped"))),
        }
    }
}

fn osc_arg(token: &Token) -> OscArg {
    if token.quoted {
        return OscArg::Str(token.text.clone());
    }
    let numeric = token
        .text
        .starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.');
    if numeric {
        if !token.text.contains('.') {
            if let Ok(v) = token.text.parse::<i32>() {
                return OscArg::Int(v);
            }
        }
        if let Some(v) = rational::parse_decimal(&token.text) {
            return OscArg::Float(rational::to_f64(&v) as f32);
        }
    }
    OscArg::Str(token.text.clone())
}

/// Parses a script. Headers (`seed`, `tick`) may appear on any line.
pub fn load_script(text: &str) -> Result<Timeline, ScriptError> {
    let mut timeline = Timeline::default();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let tokens = tokenize(raw, line)?;
        let Some(keyword) = tokens.first() else {
            continue;
        };
        let p = LineParser {
            line,
            tokens: &tokens,
            end_column: raw.chars().count() + 1,
        };
        if keyword.quoted {
            return Err(p.error(keyword.column, "expected a keyword"));
        }
        match keyword.text.as_str() {
            "seed" => {
                let token = p.token(1, "a seed")?;
                timeline.seed = token
                    .text
                    .parse()
                    .map_err(|_| p.error(token.column, "seed must be an unsigned 64-bit integer"))?;
                p.expect_len(2)?;
            }
            "tick" => {
                let tick = p.decimal(1, "a tick interval in seconds")?;
                if !tick.is_positive() {
                    return Err(p.error(tokens[1].column, "tick interval must be positive"));
                }
                timeline.tick = tick;
                p.expect_len(2)?;
            }
            "at" => {
                let start = p.time(1)?;
                let address = p.address(2)?;
                let verb = p.token(3, "a verb")?;
                let args: Vec<OscArg> = std::iter::once(OscArg::Str(verb.text.clone()))
                    .chain(tokens[4..].iter().map(osc_arg))
                    .collect();
                check_message(&p, &address, &args)?;
                timeline.events.push(TimelineEvent {
                    start,
                    end: None,
                    address: address.clone(),
                    line,
                    kind: EventKind::At(OscMessage::new(address, args)),
                });
            }
            "ramp" => {
                let (start, end) = span(&p)?;
                let address = p.address(3)?;
                let (attr, kind) = p.attribute(4, true)?;
                let from = p.decimal(5, "a start value")?;
                let to = p.decimal(6, "an end value")?;
                p.expect_len(7)?;
                timeline.events.push(TimelineEvent {
                    start,
                    end: Some(end),
                    address,
                    line,
                    kind: EventKind::Ramp { attr, kind, from, to },
                });
            }
            "randomwalk" => {
                let (start, end) = span(&p)?;
                let address = p.address(3)?;
                let (attr, kind) = p.attribute(4, true)?;
                let lo = p.decimal(5, "a lower bound")?;
                let hi = p.decimal(6, "an upper bound")?;
                let step_max = p.decimal(7, "a maximum step")?;
                p.expect_len(8)?;
                if lo > hi {
                    return Err(p.error(tokens[5].column, "lower bound exceeds upper bound"));
                }
                if step_max.is_negative() {
                    return Err(p.error(tokens[7].column, "maximum step must not be negative"));
                }
                timeline.events.push(TimelineEvent {
                    start,
                    end: Some(end),
                    address,
                    line,
                    kind: EventKind::RandomWalk {
                        attr,
                        kind,
                        lo,
                        hi,
                        step_max,
                    },
                });
            }
            other => return Err(p.error(keyword.column, format!("unknown keyword {other:?}"))),
        }
    }
    timeline.events.sort_by_key(|e| e.start);
    Ok(timeline)
}

fn span(p: &LineParser<'_>) -> Result<(Rational, Rational), ScriptError> {
    let start = p.time(1)?;
    let end = p.time(2)?;
    if end <= start {
        return Err(ScriptError::RampBackwards {
            line: p.line,
            start: rational::format(&start),
            end: rational::format(&end),
        });
    }
    Ok((start, end))
}

/// Checks an `at` message against the verb dialect the scene accepts.
fn check_message(p: &LineParser<'_>, address: &str, args: &[OscArg]) -> Result<(), ScriptError> {
    let verb_token = &p.tokens[3];
    let verb = verb_token.text.as_str();
    let rest = &args[1..];
    let arg_column = p.tokens.get(4).map_or(p.end_column, |t| t.column);
    if address == TRANSPORT_ADDRESS {
        return match verb {
            "start" | "stop" if rest.is_empty() => Ok(()),
            "tempo" => scene::compute_attr(Attr::Tempo, rest)
                .map(drop)
                .map_err(|e| p.error(arg_column, e.to_string())),
            "date" => scene::compute_attr(Attr::Date, rest)
                .map(drop)
                .map_err(|e| p.error(arg_column, e.to_string())),
            "start" | "stop" => Err(p.error(arg_column, format!("{verb} takes no arguments"))),
            _ => Err(p.error(verb_token.column, format!("unknown transport verb {verb:?}"))),
        };
    }
    match verb {
        "set" => {
            let spec = scene::payload_spec(rest).map_err(|e| p.error(arg_column, e))?;
            if let PayloadSpec::Gmn(text) = spec {
                let column = p.tokens[5].column;
                gmn::parse(&text).map_err(|e| p.error(column, format!("invalid GMN: {e}")))?;
            }
            Ok(())
        }
        "del" if rest.is_empty() => Ok(()),
        "del" => Err(p.error(arg_column, "del takes no arguments")),
        "get" => Ok(()),
        name => {
            let attr = Attr::from_name(name).ok_or_else(|| ScriptError::UnknownAttribute {
                line: p.line,
                column: verb_token.column,
                name: name.to_owned(),
            })?;
            scene::compute_attr(attr, rest).map(drop).map_err(|e| match e {
                SceneError::UncoercibleValue { reason, .. } => p.error(arg_column, format!("{attr}: {reason}")),
                other => p.error(arg_column, other.to_string()),
            })
        }
    }
}
