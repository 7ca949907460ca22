use std::fmt::Write;

use super::{Event, EventKind, Pitch, ScoreAst, Tag, Voice};
use crate::rational::Rational;

/// Prints a score back to GMN with every duration and register explicit, so
/// that re-parsing yields the same structure.
pub fn pretty(ast: &ScoreAst) -> String {
    match ast.voices.as_slice() {
        [voice] => voice_text(voice),
        voices => {
            let body: Vec<String> = voices.iter().map(|v| format!("  {}", voice_text(v))).collect();
            format!("{{\n{}\n}}", body.join(",\n"))
        }
    }
}

fn voice_text(voice: &Voice) -> String {
    let mut out = String::from("[");
    // Open range tags, innermost last.
    let mut open: Vec<usize> = Vec::new();
    let mut tags = voice.tags.iter().peekable();

    for position in 0..=voice.events.len() {
        close_ranges(&mut out, &mut open, position);
        while let Some((_, tag)) = tags.next_if(|(at, _)| *at == position) {
            out.push(' ');
            write_tag(&mut out, tag);
            if let Some(end) = tag.range_end {
                out.push('(');
                if end == position {
                    out.push(')');
                } else {
                    open.push(end);
                }
            }
        }
        if let Some(event) = voice.events.get(position) {
            out.push(' ');
            write_event(&mut out, event);
        }
    }
    close_ranges(&mut out, &mut open, usize::MAX);
    out.push_str(" ]");
    out
}

fn close_ranges(out: &mut String, open: &mut Vec<usize>, position: usize) {
    while open.last().is_some_and(|end| *end <= position) {
        open.pop();
        out.push_str(" )");
    }
}

fn write_tag(out: &mut String, tag: &Tag) {
    out.push('\\');
    out.push_str(tag.name.as_str());
    if let Some(arg) = &tag.argument {
        out.push_str("<\"");
        for c in arg.chars() {
            if matches!(c, '"' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
        out.push_str("\">");
    }
}

fn write_event(out: &mut String, event: &Event) {
    match &event.kind {
        EventKind::Note { pitch } => {
            write_pitch(out, pitch);
            write_duration(out, &event.duration);
        }
        EventKind::Rest => {
            out.push('_');
            write_duration(out, &event.duration);
        }
        EventKind::Chord { members } => {
            out.push('{');
            for (i, pitch) in members.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_pitch(out, pitch);
            }
            out.push('}');
            write_duration(out, &event.duration);
        }
    }
}

fn write_pitch(out: &mut String, pitch: &Pitch) {
    out.push(pitch.class.letter());
    let symbol = if pitch.accidental > 0 { '#' } else { '&' };
    for _ in 0..pitch.accidental.unsigned_abs() {
        out.push(symbol);
    }
    let _ = write!(out, "{}", pitch.octave);
}

fn write_duration(out: &mut String, duration: &Rational) {
    let _ = write!(out, "*{}/{}", duration.numer(), duration.denom());
}
