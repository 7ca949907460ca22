//! A GUIDO Music Notation subset: voices of notes, rests and chords plus a
//! handful of notation tags.
//!
//! ```text
//! { [ \clef<"treble"> \meter<"8/8"> \intens<"mp"> c2/8 d e f ],
//!   [ \clef<"bass"> _/4 {c0, e0, g0}/2 ] }
//! ```

mod parser;
mod print;

use std::fmt;

use num_traits::Zero;
use serde::Serialize;

use crate::rational::{self, Rational};

pub use parser::{parse, parse_bytes, ParseError, Position};
pub use print::pretty;

/// Default register when a note names none (the octave holding A440).
pub const DEFAULT_OCTAVE: i32 = 1;

pub fn default_duration() -> Rational {
    Rational::new(1, 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PitchClass {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl PitchClass {
    pub const ALL: [PitchClass; 7] = [
        PitchClass::C,
        PitchClass::D,
        PitchClass::E,
        PitchClass::F,
        PitchClass::G,
        PitchClass::A,
        PitchClass::B,
    ];

    pub fn from_letter(letter: char) -> Option<Self> {
        Some(match letter {
            'c' => PitchClass::C,
            'd' => PitchClass::D,
            'e' => PitchClass::E,
            'f' => PitchClass::F,
            'g' => PitchClass::G,
            'a' => PitchClass::A,
            'b' | 'h' => PitchClass::B,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            PitchClass::C => 'c',
            PitchClass::D => 'd',
            PitchClass::E => 'e',
            PitchClass::F => 'f',
            PitchClass::G => 'g',
            PitchClass::A => 'a',
            PitchClass::B => 'b',
        }
    }

    /// Semitones above C.
    pub fn chroma(self) -> i32 {
        match self {
            PitchClass::C => 0,
            PitchClass::D => 2,
            PitchClass::E => 4,
            PitchClass::F => 5,
            PitchClass::G => 7,
            PitchClass::A => 9,
            PitchClass::B => 11,
        }
    }

    /// Diatonic step above C (0..=6).
    pub fn step(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Pitch {
    pub class: PitchClass,
    /// Semitone offset, always within -2..=2.
    pub accidental: i8,
    pub octave: i32,
}

impl Pitch {
    pub fn new(class: PitchClass, accidental: i8, octave: i32) -> Self {
        Pitch {
            class,
            accidental: accidental.clamp(-2, 2),
            octave,
        }
    }

    pub fn midi(&self) -> i64 {
        midi_number(self.class, self.accidental, self.octave)
    }

    /// Diatonic staff position counted in steps from c0.
    pub fn diatonic_index(&self) -> i64 {
        i64::from(self.octave) * 7 + i64::from(self.class.step())
    }
}

/// MIDI key number under the GUIDO register convention (c1 = 60, a1 = 69).
pub fn midi_number(class: PitchClass, accidental: i8, octave: i32) -> i64 {
    12 * (i64::from(octave) + 4) + i64::from(class.chroma()) + i64::from(accidental)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Note { pitch: Pitch },
    Rest,
    Chord { members: Vec<Pitch> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    #[serde(serialize_with = "serialize_rational")]
    pub duration: Rational,
}

impl Event {
    pub fn is_rest(&self) -> bool {
        matches!(self.kind, EventKind::Rest)
    }

    pub fn pitches(&self) -> &[Pitch] {
        match &self.kind {
            EventKind::Note { pitch } => std::slice::from_ref(pitch),
            EventKind::Rest => &[],
            EventKind::Chord { members } => members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TagName {
    Clef,
    Meter,
    Intens,
    Text,
    Pizz,
    Slur,
    Tie,
    /// Any tag outside the supported set, kept verbatim and treated as a
    /// free-text annotation.
    #[serde(untagged)]
    Other(String),
}

impl TagName {
    pub fn from_ident(ident: &str) -> TagName {
        match ident {
            "clef" => TagName::Clef,
            "meter" => TagName::Meter,
            "intens" | "i" => TagName::Intens,
            "text" | "t" => TagName::Text,
            "pizz" => TagName::Pizz,
            "slur" => TagName::Slur,
            "tie" => TagName::Tie,
            other => TagName::Other(other.to_owned()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            TagName::Clef => "clef",
            TagName::Meter => "meter",
            TagName::Intens => "intens",
            TagName::Text => "text",
            TagName::Pizz => "pizz",
            TagName::Slur => "slur",
            TagName::Tie => "tie",
            TagName::Other(name) => name,
        }
    }

    pub fn is_text_class(&self) -> bool {
        matches!(self, TagName::Text | TagName::Other(_))
    }
}

impl fmt::Display for TagName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tag {
    pub name: TagName,
    pub argument: Option<String>,
    /// For range tags such as `\slur( c d )`: the event index one past the
    /// last event covered.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_end: Option<usize>,
}

impl Tag {
    pub fn new(name: TagName, argument: Option<&str>) -> Self {
        Tag {
            name,
            argument: argument.map(str::to_owned),
            range_end: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Voice {
    pub events: Vec<Event>,
    /// Tags keyed by the index of the event they precede.
    pub tags: Vec<(usize, Tag)>,
}

impl Voice {
    /// Onset date of every event: prefix sums of durations starting at 0.
    pub fn dates(&self) -> Vec<Rational> {
        let mut date = Rational::zero();
        self.events
            .iter()
            .map(|event| {
                let onset = date;
                date += event.duration;
                onset
            })
            .collect()
    }

    pub fn tags_at(&self, position: usize) -> impl Iterator<Item = &Tag> {
        self.tags
            .iter()
            .filter(move |(at, _)| *at == position)
            .map(|(_, tag)| tag)
    }

    pub fn find_tag(&self, name: &TagName) -> Option<(usize, &Tag)> {
        self.tags
            .iter()
            .find(|(_, tag)| &tag.name == name)
            .map(|(at, tag)| (*at, tag))
    }
}

/// Sum of the voice's event durations, in whole notes.
pub fn total_duration(voice: &Voice) -> Rational {
    rational::checked_sum(voice.events.iter().map(|e| &e.duration))
        .expect("voice durations were overflow-checked at parse time")
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreAst {
    pub voices: Vec<Voice>,
    #[serde(skip)]
    pub source_text: String,
}

/// Compares structure only; the source text is ignored.
impl PartialEq for ScoreAst {
    fn eq(&self, other: &Self) -> bool {
        self.same_structure(other)
    }
}

impl ScoreAst {
    /// Structural equality: same voices, ignoring the source text.
    pub fn same_structure(&self, other: &ScoreAst) -> bool {
        self.voices == other.voices
    }

    pub fn total_duration(&self) -> Rational {
        self.voices
            .iter()
            .map(total_duration)
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

fn serialize_rational<S: serde::Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(value))
}
