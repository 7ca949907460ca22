//! Time-proportional engraving of a score into fragment-local vector glyphs.
//!
//! Fragment-local units: x runs over `[0, width]`, y over `[0, height]`
//! growing downward. Each voice gets one five-line staff in its own band;
//! bands are stacked top to bottom in voice order.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde::Serialize;

use crate::geom::{Affine, Rect};
use crate::gmn::{EventKind, Pitch, ScoreAst, TagName, Voice};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayoutStyle {
    pub width: f64,
    pub staff_height: f64,
    /// Region reserved for clef and meter, mapped to date 0.
    pub prefix_width: f64,
}

impl Default for LayoutStyle {
    fn default() -> Self {
        LayoutStyle {
            width: 1.0,
            staff_height: 0.1,
            prefix_width: 0.1,
        }
    }
}

impl LayoutStyle {
    /// Height of one voice band: the staff plus room above and below.
    pub fn band_height(&self) -> f64 {
        self.staff_height * 2.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlyphKind {
    StaffLine,
    Notehead,
    Stem,
    Rest,
    Text,
    Barline,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Line {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    /// Closed polygon.
    Path {
        points: Vec<(f64, f64)>,
    },
    /// `y` is the baseline.
    Text {
        x: f64,
        y: f64,
        size: f64,
        content: String,
    },
}

/// Rough advance width of one character relative to the font size.
const CHAR_ADVANCE: f64 = 0.5;

impl Shape {
    pub fn extent(&self) -> Rect {
        match self {
            Shape::Line { x1, y1, x2, y2 } => Rect::new(x1.min(*x2), y1.min(*y2), x1.max(*x2), y1.max(*y2)),
            Shape::Ellipse { cx, cy, rx, ry } => Rect::new(cx - rx, cy - ry, cx + rx, cy + ry),
            Shape::Path { points } => {
                Rect::from_points(points.iter().copied()).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0))
            }
            Shape::Text { x, y, size, content } => {
                let width = text_width(content, *size);
                Rect::new(*x, y - 0.8 * size, x + width, y + 0.2 * size)
            }
        }
    }
}

fn text_width(content: &str, size: f64) -> f64 {
    content.chars().count() as f64 * CHAR_ADVANCE * size
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Glyph {
    pub kind: GlyphKind,
    #[serde(flatten)]
    pub shape: Shape,
    pub anchor: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlyphSet {
    pub glyphs: Vec<Glyph>,
    pub width: f64,
    pub height: f64,
    /// Height of one staff; used for the vertical displacement hint.
    pub staff_height: f64,
}

impl GlyphSet {
    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width / 2.0, self.height / 2.0)
    }
}

/// Monotone musical-date → x map, piecewise linear between breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeMap {
    pub breakpoints: Vec<(Rational, f64)>,
}

impl TimeMap {
    pub fn end_date(&self) -> Rational {
        self.breakpoints.last().map(|(d, _)| *d).unwrap_or_else(Rational::zero)
    }

    pub fn x_at_date(&self, date: Rational) -> f64 {
        x_at_date(self, date)
    }
}

/// Interpolates x at `date`, clamping to the first and last breakpoints.
pub fn x_at_date(map: &TimeMap, date: Rational) -> f64 {
    let points = &map.breakpoints;
    let Some(&(first_date, first_x)) = points.first() else {
        return 0.0;
    };
    if date <= first_date {
        return first_x;
    }
    // First breakpoint strictly after `date`.
    let upper = points.partition_point(|(d, _)| *d <= date);
    if upper == points.len() {
        return points[points.len() - 1].1;
    }
    let (d0, x0) = points[upper - 1];
    let (d1, x1) = points[upper];
    let fraction = rational::to_f64(&((date - d0) / (d1 - d0)));
    x0 + fraction * (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clef {
    Treble,
    Alto,
    Bass,
}

impl Clef {
    fn from_argument(arg: Option<&str>) -> Clef {
        let arg = arg.unwrap_or("treble").to_ascii_lowercase();
        match arg.as_str() {
            "bass" | "f" | "f4" => Clef::Bass,
            "alto" | "c" | "c3" => Clef::Alto,
            _ => Clef::Treble,
        }
    }

    /// Diatonic index (see [`Pitch::diatonic_index`]) of the bottom staff line.
    fn bottom_line(self) -> i64 {
        match self {
            Clef::Treble => 9, // e1
            Clef::Alto => 3,   // f0
            Clef::Bass => -3,  // g-1
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Clef::Treble => "G",
            Clef::Alto => "C",
            Clef::Bass => "F",
        }
    }
}

fn measure_length(meter: &str) -> Option<Rational> {
    match meter.trim() {
        "C" | "C/" => Some(Rational::from_integer(1)),
        other => {
            let (n, d) = other.split_once('/')?;
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (n > 0 && d > 0).then(|| Rational::new(n, d))
        }
    }
}

/// Lays out `ast` with time-proportional spacing. The returned map is shared
/// by all voices: an event at date `t` sits at
/// `prefix + t / total · (width − prefix)`.
pub fn layout_fragment(ast: &ScoreAst, style: &LayoutStyle) -> (GlyphSet, TimeMap) {
    let band = style.band_height();
    let voice_count = ast.voices.len().max(1);
    let height = band * voice_count as f64;
    let mut builder = Builder {
        style: *style,
        height,
        glyphs: Vec::new(),
    };

    if ast.voices.is_empty() {
        builder.staff(0.0);
        return (
            builder.finish(),
            TimeMap {
                breakpoints: Vec::new(),
            },
        );
    }

    let total = ast.total_duration();
    let timemap = build_timemap(ast, style, total);
    for (index, voice) in ast.voices.iter().enumerate() {
        builder.voice(voice, index as f64 * band, &timemap, total);
    }
    (builder.finish(), timemap)
}

fn build_timemap(ast: &ScoreAst, style: &LayoutStyle, total: Rational) -> TimeMap {
    if total.is_zero() {
        return TimeMap {
            breakpoints: vec![(Rational::zero(), style.prefix_width)],
        };
    }
    let mut dates: BTreeSet<Rational> = ast.voices.iter().flat_map(Voice::dates).collect();
    dates.insert(Rational::zero());
    dates.insert(total);
    let span = style.width - style.prefix_width;
    let breakpoints = dates
        .into_iter()
        .map(|d| (d, style.prefix_width + rational::to_f64(&(d / total)) * span))
        .collect();
    TimeMap { breakpoints }
}

/// Scene-space box of a transformed fragment.
///
/// Every glyph lies inside the fragment's declared `[0,width]×[0,height]`
/// box, so the transformed box encloses every transformed glyph.
pub fn bounding_box(glyphs: &GlyphSet, transform: &Affine) -> Rect {
    glyphs.bounds().transformed(transform)
}

/// A free-standing label, one staff height tall.
pub fn layout_text(content: &str, style: &LayoutStyle) -> GlyphSet {
    let size = style.staff_height;
    let width = text_width(content, size).max(size * CHAR_ADVANCE);
    GlyphSet {
        glyphs: vec![Glyph {
            kind: GlyphKind::Text,
            shape: Shape::Text {
                x: 0.0,
                y: 0.8 * size,
                size,
                content: content.to_owned(),
            },
            anchor: (0.0, 0.8 * size),
        }],
        width,
        height: size,
        staff_height: style.staff_height,
    }
}

struct Builder {
    style: LayoutStyle,
    height: f64,
    glyphs: Vec<Glyph>,
}

impl Builder {
    fn finish(self) -> GlyphSet {
        GlyphSet {
            glyphs: self.glyphs,
            width: self.style.width,
            height: self.height,
            staff_height: self.style.staff_height,
        }
    }

    fn push(&mut self, kind: GlyphKind, shape: Shape, anchor: (f64, f64)) {
        self.glyphs.push(Glyph { kind, shape, anchor });
    }

    fn clamp_y(&self, y: f64) -> f64 {
        y.clamp(0.0, self.height)
    }

    fn staff_top(&self, band_top: f64) -> f64 {
        band_top + 0.75 * self.style.staff_height
    }

    fn staff(&mut self, band_top: f64) {
        let top = self.staff_top(band_top);
        let width = self.style.width;
        for line in 0..5 {
            let y = top + f64::from(line) * self.style.staff_height / 4.0;
            self.push(
                GlyphKind::StaffLine,
                Shape::Line {
                    x1: 0.0,
                    y1: y,
                    x2: width,
                    y2: y,
                },
                (0.0, y),
            );
        }
    }

    /// Places text with its left edge at `x`, shrinking or shifting it so it
    /// stays inside the fragment.
    fn text(&mut self, x: f64, baseline: f64, size: f64, content: &str) {
        if content.is_empty() {
            return;
        }
        let width = self.style.width;
        let natural = text_width(content, size);
        let size = if natural > width { size * width / natural } else { size };
        let x = x.min(width - text_width(content, size)).max(0.0);
        let baseline = baseline.clamp(0.8 * size, self.height - 0.2 * size);
        self.push(
            GlyphKind::Text,
            Shape::Text {
                x,
                y: baseline,
                size,
                content: content.to_owned(),
            },
            (x, baseline),
        );
    }

    fn voice(&mut self, voice: &Voice, band_top: f64, map: &TimeMap, total: Rational) {
        let sh = self.style.staff_height;
        let step = sh / 8.0;
        let top = self.staff_top(band_top);
        let bottom = top + sh;
        let width = self.style.width;
        self.staff(band_top);

        let mut clef = voice
            .find_tag(&TagName::Clef)
            .filter(|(at, _)| *at == 0)
            .map(|(_, tag)| Clef::from_argument(tag.argument.as_deref()))
            .unwrap_or(Clef::Treble);

        let prefix = self.style.prefix_width;
        let symbol_size = 0.8 * sh;
        if prefix >= text_width("G", symbol_size) {
            self.text(0.0, bottom - step, symbol_size, clef.symbol());
        }
        let meter = voice
            .tags_at(0)
            .find(|tag| tag.name == TagName::Meter)
            .and_then(|tag| tag.argument.clone());
        if let Some(meter) = &meter {
            let size = 0.5 * sh;
            let x = text_width("G", symbol_size);
            if prefix >= x + text_width(meter, size) {
                self.text(x, top + sh / 2.0 + 0.3 * size, size, meter);
            }
        }

        if let Some(measure) = meter.as_deref().and_then(measure_length) {
            let mut date = measure;
            while date < total {
                self.barline(map.x_at_date(date), top, bottom);
                date += measure;
            }
        }
        if !total.is_zero() {
            self.barline(width, top, bottom);
        }

        let rx = (0.14 * sh).min(width / 2.0);
        let dates = voice.dates();
        for position in 0..=voice.events.len() {
            let date = dates.get(position).copied().unwrap_or(total);
            let x = map.x_at_date(date);
            for tag in voice.tags_at(position) {
                if tag.name == TagName::Clef && position > 0 {
                    clef = Clef::from_argument(tag.argument.as_deref());
                }
                let label = match &tag.name {
                    TagName::Intens => tag.argument.clone(),
                    TagName::Pizz => Some("pizz.".to_owned()),
                    name if name.is_text_class() => tag.argument.clone().or_else(|| Some(name.to_string())),
                    _ => None,
                };
                match (&tag.name, label) {
                    (TagName::Intens, Some(label)) => self.text(x, bottom + 0.55 * sh, 0.4 * sh, &label),
                    (TagName::Other(name), _) if name == "bar" => self.barline(x, top, bottom),
                    (_, Some(label)) => self.text(x, top - 0.3 * sh, 0.35 * sh, &label),
                    _ => {}
                }
            }
            let Some(event) = voice.events.get(position) else {
                break;
            };
            // Notehead left edge sits on the event's x; squeeze at the right end.
            let cx = (x + rx).min(width - rx);
            match &event.kind {
                EventKind::Rest => {
                    let mid = top + sh / 2.0;
                    let (x0, x1) = (cx - rx * 0.6, cx + rx * 0.6);
                    let points = vec![(x0, mid - step), (x1, mid - step), (x1, mid + step), (x0, mid + step)];
                    self.push(GlyphKind::Rest, Shape::Path { points }, (x, mid));
                }
                EventKind::Note { .. } | EventKind::Chord { .. } => {
                    let ys: Vec<f64> = event
                        .pitches()
                        .iter()
                        .map(|p| {
                            self.clamp_y(note_y(p, clef, bottom, step))
                                .clamp(step, self.height - step)
                        })
                        .collect();
                    for y in &ys {
                        self.push(
                            GlyphKind::Notehead,
                            Shape::Ellipse {
                                cx,
                                cy: *y,
                                rx,
                                ry: step,
                            },
                            (x, *y),
                        );
                    }
                    let lowest = ys.iter().copied().fold(f64::MIN, f64::max);
                    let highest = ys.iter().copied().fold(f64::MAX, f64::min);
                    let stem_x = cx + rx;
                    self.push(
                        GlyphKind::Stem,
                        Shape::Line {
                            x1: stem_x,
                            y1: lowest,
                            x2: stem_x,
                            y2: self.clamp_y(highest - 7.0 * step),
                        },
                        (x, lowest),
                    );
                }
            }
        }
    }

    fn barline(&mut self, x: f64, top: f64, bottom: f64) {
        let x = x.clamp(0.0, self.style.width);
        self.push(
            GlyphKind::Barline,
            Shape::Line {
                x1: x,
                y1: top,
                x2: x,
                y2: bottom,
            },
            (x, top),
        );
    }
}

fn note_y(pitch: &Pitch, clef: Clef, staff_bottom: f64, step: f64) -> f64 {
    let steps = pitch.diatonic_index() - clef.bottom_line();
    staff_bottom - steps as f64 * step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmn::parse;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn event_xs(source: &str, style: &LayoutStyle) -> Vec<f64> {
        let ast = parse(source).unwrap();
        let (_, map) = layout_fragment(&ast, style);
        ast.voices[0].dates().into_iter().map(|d| map.x_at_date(d)).collect()
    }

    #[test]
    fn proportional_event_positions() {
        let xs = event_xs("[c d e f]", &LayoutStyle::default());
        let expected = [0.1, 0.325, 0.55, 0.775];
        for (x, e) in xs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12, "{xs:?}");
        }
    }

    #[test]
    fn empty_voice_is_staff_only() {
        let ast = parse("[ ]").unwrap();
        let (glyphs, map) = layout_fragment(&ast, &LayoutStyle::default());
        assert_eq!(map.breakpoints, vec![(Rational::zero(), 0.1)]);
        assert!(glyphs
            .glyphs
            .iter()
            .all(|g| matches!(g.kind, GlyphKind::StaffLine | GlyphKind::Text)));
        assert_eq!(
            glyphs.glyphs.iter().filter(|g| g.kind == GlyphKind::StaffLine).count(),
            5
        );
    }

    #[test]
    fn no_voices_gives_empty_map() {
        let ast = ScoreAst {
            voices: Vec::new(),
            source_text: String::new(),
        };
        let (glyphs, map) = layout_fragment(&ast, &LayoutStyle::default());
        assert!(map.breakpoints.is_empty());
        assert_eq!(glyphs.glyphs.len(), 5);
    }

    #[test]
    fn four_voices_stack_four_staves() {
        let ast = parse("{[c d],[e f],[g a],[b c]}").unwrap();
        let style = LayoutStyle::default();
        let (glyphs, map) = layout_fragment(&ast, &style);
        let lines: Vec<_> = glyphs
            .glyphs
            .iter()
            .filter(|g| g.kind == GlyphKind::StaffLine)
            .collect();
        assert_eq!(lines.len(), 20);
        assert!((glyphs.height - 4.0 * style.band_height()).abs() < 1e-12);
        assert_eq!(map.breakpoints.len(), 3);
    }

    #[test]
    fn timemap_interpolates_and_clamps() {
        let ast = parse("[c/2 d/2]").unwrap();
        let (_, map) = layout_fragment(&ast, &LayoutStyle::default());
        assert_eq!(map.x_at_date(Rational::zero()), 0.1);
        assert!((map.x_at_date(r(1, 4)) - (0.1 + 0.225)).abs() < 1e-12);
        assert_eq!(map.x_at_date(r(5, 1)), 1.0);
    }

    #[test]
    fn bounding_box_follows_transform() {
        let ast = parse("[c d e f]").unwrap();
        let (glyphs, _) = layout_fragment(&ast, &LayoutStyle::default());
        let (w, h) = (glyphs.width, glyphs.height);
        assert_eq!(bounding_box(&glyphs, &Affine::IDENTITY), Rect::new(0.0, 0.0, w, h));
        assert_eq!(
            bounding_box(&glyphs, &Affine::translate(0.5, 0.0)),
            Rect::new(0.5, 0.0, w + 0.5, h)
        );
        let (cx, cy) = glyphs.center();
        let about_center = Affine::translate(cx, cy)
            .then_after(&Affine::rotate_degrees(90.0))
            .then_after(&Affine::translate(-cx, -cy));
        let rotated = bounding_box(&glyphs, &about_center);
        let expected = Rect::new(cx - h / 2.0, cy - w / 2.0, cx + h / 2.0, cy + w / 2.0);
        for (a, b) in [
            (rotated.x0, expected.x0),
            (rotated.y0, expected.y0),
            (rotated.x1, expected.x1),
            (rotated.y1, expected.y1),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn clef_moves_noteheads() {
        let treble = parse(r#"[ \clef<"treble"> c1 ]"#).unwrap();
        let bass = parse(r#"[ \clef<"bass"> c1 ]"#).unwrap();
        let style = LayoutStyle::default();
        let y = |ast: &ScoreAst| {
            let (g, _) = layout_fragment(ast, &style);
            g.glyphs
                .iter()
                .find(|g| g.kind == GlyphKind::Notehead)
                .unwrap()
                .anchor
                .1
        };
        // Middle C: one ledger line below treble, one above bass.
        let step = style.staff_height / 8.0;
        let staff_top = 0.75 * style.staff_height;
        assert!((y(&treble) - (staff_top + style.staff_height + 2.0 * step)).abs() < 1e-12);
        assert!((y(&bass) - (staff_top - 2.0 * step)).abs() < 1e-12);
    }

    #[test]
    fn meter_draws_barlines() {
        let ast = parse(r#"[ \meter<"2/4"> c d e f ]"#).unwrap();
        let (glyphs, _) = layout_fragment(&ast, &LayoutStyle::default());
        let bars = glyphs.glyphs.iter().filter(|g| g.kind == GlyphKind::Barline).count();
        assert_eq!(bars, 2);
    }
}
