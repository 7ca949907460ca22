use std::fmt;

use num_traits::{CheckedAdd, CheckedMul};
use thiserror::Error;

use super::{default_duration, Event, EventKind, Pitch, PitchClass, ScoreAst, Tag, TagName, Voice, DEFAULT_OCTAVE};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{position}: syntax error: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        position: Position,
        expected: Vec<String>,
        found: String,
    },
    #[error("{position}: unbalanced delimiter `{delimiter}`")]
    UnbalancedDelimiter { position: Position, delimiter: char },
    #[error("{position}: bad duration: {reason}")]
    BadDuration { position: Position, reason: String },
    #[error("empty score: no voice found")]
    EmptyScore,
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },
}

impl ParseError {
    pub fn position(&self) -> Option<Position> {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::UnbalancedDelimiter { position, .. }
            | ParseError::BadDuration { position, .. } => Some(*position),
            ParseError::EmptyScore | ParseError::InvalidUtf8 { .. } => None,
        }
    }
}

/// Parses GMN source into a score.
///
/// `[ ... ]` is one voice and `{ [..], [..] }` a set of parallel voices.
/// Notes default to a quarter in register 1 and otherwise inherit the
/// duration and register of the previous note.
pub fn parse(text: &str) -> Result<ScoreAst, ParseError> {
    let mut parser = Parser::new(text);
    let voices = parser.score()?;
    Ok(ScoreAst {
        voices,
        source_text: text.to_owned(),
    })
}

pub fn parse_bytes(bytes: &[u8]) -> Result<ScoreAst, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(err) => Err(ParseError::InvalidUtf8 {
            offset: err.valid_up_to(),
        }),
    }
}

struct Parser<'a> {
    src: &'a str,
    offset: usize,
    line: usize,
    column: usize,
}

/// Running state inherited from one note to the next within a voice.
struct Running {
    duration: Rational,
    octave: i32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            offset: 0,
            line: 1,
            column: 1,
        }
    }

    fn position(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.offset..].chars().next()
    }

    fn peek_second(&self) -> Option<char> {
        let mut chars = self.src[self.offset..].chars();
        chars.next();
        chars.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn eat(&mut self, expected: char) -> bool {
        if self.peek() == Some(expected) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_owned(),
        }
    }

    fn syntax<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.position(),
            expected: expected.iter().map(|s| (*s).to_owned()).collect(),
            found: self.found(),
        })
    }

    /// Skips whitespace, `%` line comments and `(* ... *)` block comments.
    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('%') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('(') if self.peek_second() == Some('*') => {
                    let start = self.position();
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            Some('*') if self.peek() == Some(')') => {
                                self.bump();
                                break;
                            }
                            Some(_) => {}
                            None => {
                                return Err(ParseError::UnbalancedDelimiter {
                                    position: start,
                                    delimiter: '(',
                                })
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn score(&mut self) -> Result<Vec<Voice>, ParseError> {
        self.skip_trivia()?;
        let voices = match self.peek() {
            None => return Err(ParseError::EmptyScore),
            Some('[') => vec![self.voice()?],
            Some('{') => {
                let open = self.position();
                self.bump();
                let mut voices = Vec::new();
                loop {
                    self.skip_trivia()?;
                    match self.peek() {
                        Some('}') => {
                            self.bump();
                            break;
                        }
                        Some('[') => {
                            voices.push(self.voice()?);
                            self.skip_trivia()?;
                            match self.peek() {
                                Some(',') => {
                                    self.bump();
                                }
                                Some('}') => {}
                                None => {
                                    return Err(ParseError::UnbalancedDelimiter {
                                        position: open,
                                        delimiter: '{',
                                    })
                                }
                                _ => return self.syntax(&["`,`", "`}`"]),
                            }
                        }
                        None => {
                            return Err(ParseError::UnbalancedDelimiter {
                                position: open,
                                delimiter: '{',
                            })
                        }
                        _ => return self.syntax(&["`[`", "`}`"]),
                    }
                }
                if voices.is_empty() {
                    return Err(ParseError::EmptyScore);
                }
                voices
            }
            Some(c @ (']' | '}')) => {
                return Err(ParseError::UnbalancedDelimiter {
                    position: self.position(),
                    delimiter: c,
                })
            }
            _ => return self.syntax(&["`[`", "`{`"]),
        };
        self.skip_trivia()?;
        match self.peek() {
            None => Ok(voices),
            Some(c @ (']' | '}' | ')')) => Err(ParseError::UnbalancedDelimiter {
                position: self.position(),
                delimiter: c,
            }),
            Some(_) => self.syntax(&["end of input"]),
        }
    }

    fn voice(&mut self) -> Result<Voice, ParseError> {
        let open = self.position();
        debug_assert_eq!(self.peek(), Some('['));
        self.bump();

        let mut voice = Voice::default();
        let mut total = Rational::new(0, 1);
        let mut running = Running {
            duration: default_duration(),
            octave: DEFAULT_OCTAVE,
        };
        // Indices into `voice.tags` of range tags still waiting for `)`.
        let mut open_ranges: Vec<(usize, Position)> = Vec::new();

        loop {
            self.skip_trivia()?;
            let here = self.position();
            match self.peek() {
                None | Some('}') => {
                    let (position, delimiter) = match open_ranges.last() {
                        Some((_, pos)) => (*pos, '('),
                        None => (open, '['),
                    };
                    return Err(ParseError::UnbalancedDelimiter { position, delimiter });
                }
                Some(']') => {
                    if let Some((_, position)) = open_ranges.last() {
                        return Err(ParseError::UnbalancedDelimiter {
                            position: *position,
                            delimiter: '(',
                        });
                    }
                    self.bump();
                    return Ok(voice);
                }
                Some(')') => {
                    let Some((index, _)) = open_ranges.pop() else {
                        return Err(ParseError::UnbalancedDelimiter {
                            position: here,
                            delimiter: ')',
                        });
                    };
                    self.bump();
                    voice.tags[index].1.range_end = Some(voice.events.len());
                }
                Some('\\') => {
                    let (tag, opens_range) = self.tag()?;
                    voice.tags.push((voice.events.len(), tag));
                    if opens_range {
                        open_ranges.push((voice.tags.len() - 1, here));
                    }
                }
                Some('|') => {
                    self.bump();
                    voice
                        .tags
                        .push((voice.events.len(), Tag::new(TagName::Other("bar".into()), None)));
                }
                Some('_') => {
                    self.bump();
                    let duration = self.duration(&mut running)?;
                    self.push_event(&mut voice, &mut total, EventKind::Rest, duration, here)?;
                }
                Some('{') => {
                    let (members, duration) = self.chord(&mut running)?;
                    self.push_event(&mut voice, &mut total, EventKind::Chord { members }, duration, here)?;
                }
                Some(c) if PitchClass::from_letter(c).is_some() => {
                    let (pitch, duration) = self.note(&mut running)?;
                    self.push_event(&mut voice, &mut total, EventKind::Note { pitch }, duration, here)?;
                }
                Some('[') => return self.syntax(&["note", "rest", "chord", "tag", "`]`"]),
                Some(_) => return self.syntax(&["note", "rest", "chord", "tag", "`]`"]),
            }
        }
    }

    fn push_event(
        &self,
        voice: &mut Voice,
        total: &mut Rational,
        kind: EventKind,
        duration: Rational,
        position: Position,
    ) -> Result<(), ParseError> {
        // Keep the running total representable so prefix sums never overflow.
        *total = total.checked_add(&duration).ok_or(ParseError::BadDuration {
            position,
            reason: "voice length overflows".into(),
        })?;
        voice.events.push(Event { kind, duration });
        Ok(())
    }

    fn chord(&mut self, running: &mut Running) -> Result<(Vec<Pitch>, Rational), ParseError> {
        let open = self.position();
        self.bump();
        let mut members = Vec::new();
        let mut duration = None;
        loop {
            self.skip_trivia()?;
            match self.peek() {
                Some(c) if PitchClass::from_letter(c).is_some() => {
                    let (pitch, member_duration) = self.note(running)?;
                    members.push(pitch);
                    duration.get_or_insert(member_duration);
                    self.skip_trivia()?;
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                        }
                        Some('}') => {}
                        None | Some(']') => {
                            return Err(ParseError::UnbalancedDelimiter {
                                position: open,
                                delimiter: '{',
                            })
                        }
                        _ => return self.syntax(&["`,`", "`}`"]),
                    }
                }
                Some('}') => {
                    let close = self.position();
                    self.bump();
                    if members.len() < 2 {
                        return Err(ParseError::Syntax {
                            position: close,
                            expected: vec!["at least two chord members".into()],
                            found: "`}`".into(),
                        });
                    }
                    break;
                }
                None | Some(']') => {
                    return Err(ParseError::UnbalancedDelimiter {
                        position: open,
                        delimiter: '{',
                    })
                }
                _ => return self.syntax(&["note", "`}`"]),
            }
        }
        let duration = match self.peek() {
            Some('/' | '*') => self.duration(running)?,
            _ => duration.unwrap_or(running.duration),
        };
        Ok((members, duration))
    }

    fn note(&mut self, running: &mut Running) -> Result<(Pitch, Rational), ParseError> {
        let letter = self.bump().and_then(PitchClass::from_letter);
        let class = letter.expect("caller checked for a pitch letter");
        let mut accidental: i32 = 0;
        loop {
            match self.peek() {
                Some('#') => accidental += 1,
                Some('&') => accidental -= 1,
                _ => break,
            }
            self.bump();
        }
        if let Some(octave) = self.octave()? {
            running.octave = octave;
        }
        if matches!(self.peek(), Some(c) if c.is_ascii_alphabetic()) {
            return self.syntax(&["accidental", "octave", "duration"]);
        }
        let duration = self.duration(running)?;
        let accidental = accidental.clamp(-2, 2) as i8;
        Ok((Pitch::new(class, accidental, running.octave), duration))
    }

    fn octave(&mut self) -> Result<Option<i32>, ParseError> {
        let negative = match self.peek() {
            Some('-') if matches!(self.peek_second(), Some(c) if c.is_ascii_digit()) => {
                self.bump();
                true
            }
            Some(c) if c.is_ascii_digit() => false,
            _ => return Ok(None),
        };
        let position = self.position();
        let value = self.integer()?;
        let value = i32::try_from(value)
            .ok()
            .filter(|v| *v <= 64)
            .ok_or(ParseError::Syntax {
                position,
                expected: vec!["octave between -64 and 64".into()],
                found: value.to_string(),
            })?;
        Ok(Some(if negative { -value } else { value }))
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        let position = self.position();
        let mut value: i64 = 0;
        let mut any = false;
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            self.bump();
            any = true;
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(i64::from(c as u8 - b'0')))
                .ok_or(ParseError::BadDuration {
                    position,
                    reason: "number too large".into(),
                })?;
        }
        if !any {
            return self.syntax(&["digit"]);
        }
        Ok(value)
    }

    /// `/d`, `*n/d` or `*n`, followed by dots; inherits when absent.
    fn duration(&mut self, running: &mut Running) -> Result<Rational, ParseError> {
        let position = self.position();
        let explicit = match self.peek() {
            Some('/') => {
                self.bump();
                let denom = self.integer()?;
                Some((1, denom))
            }
            Some('*') => {
                self.bump();
                let numer = self.integer()?;
                let denom = if self.eat('/') { self.integer()? } else { 1 };
                Some((numer, denom))
            }
            _ => None,
        };
        let mut duration = match explicit {
            Some((numer, denom)) => {
                if numer == 0 || denom == 0 {
                    return Err(ParseError::BadDuration {
                        position,
                        reason: format!("{numer}/{denom} is not a positive duration"),
                    });
                }
                Rational::new(numer, denom)
            }
            None => running.duration,
        };
        let mut dots = 0u32;
        while self.eat('.') {
            dots += 1;
        }
        if dots > 0 {
            // k dots multiply by (2^(k+1) - 1) / 2^k.
            let factor = 2i64
                .checked_pow(dots + 1)
                .zip(2i64.checked_pow(dots))
                .map(|(num, den)| Rational::new(num - 1, den));
            duration = factor
                .and_then(|f| duration.checked_mul(&f))
                .ok_or(ParseError::BadDuration {
                    position,
                    reason: "too many dots".into(),
                })?;
        }
        if explicit.is_some() || dots > 0 {
            running.duration = duration;
        }
        Ok(duration)
    }

    fn tag(&mut self) -> Result<(Tag, bool), ParseError> {
        self.bump();
        let start = self.offset;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return self.syntax(&["tag name"]),
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.bump();
        }
        let name = TagName::from_ident(&self.src[start..self.offset]);
        let argument = if self.peek() == Some('<') {
            let open = self.position();
            self.bump();
            self.skip_trivia()?;
            let value = match self.peek() {
                Some('"') => self.quoted()?,
                Some('>') => {
                    return Err(ParseError::Syntax {
                        position: self.position(),
                        expected: vec!["tag argument".into()],
                        found: "`>`".into(),
                    })
                }
                None => {
                    return Err(ParseError::UnbalancedDelimiter {
                        position: open,
                        delimiter: '<',
                    })
                }
                Some(_) => self.bare_word(),
            };
            self.skip_trivia()?;
            match self.peek() {
                Some('>') => {
                    self.bump();
                }
                None => {
                    return Err(ParseError::UnbalancedDelimiter {
                        position: open,
                        delimiter: '<',
                    })
                }
                _ => return self.syntax(&["`>`"]),
            }
            Some(value)
        } else {
            None
        };
        let opens_range = self.peek() == Some('(') && self.peek_second() != Some('*');
        if opens_range {
            self.bump();
        }
        Ok((
            Tag {
                name,
                argument,
                range_end: None,
            },
            opens_range,
        ))
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let open = self.position();
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(value),
                Some('\\') if matches!(self.peek(), Some('"' | '\\')) => {
                    value.push(self.bump().expect("peeked"));
                }
                Some(c) => value.push(c),
                None => {
                    return Err(ParseError::UnbalancedDelimiter {
                        position: open,
                        delimiter: '"',
                    })
                }
            }
        }
    }

    fn bare_word(&mut self) -> String {
        let start = self.offset;
        while matches!(self.peek(), Some(c) if !c.is_whitespace() && c != '>' && c != ',') {
            self.bump();
        }
        self.src[start..self.offset].to_owned()
    }
}
