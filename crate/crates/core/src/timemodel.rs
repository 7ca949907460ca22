//! Musical time: a transport that turns wall-clock seconds into exact
//! whole-note dates, per-cursor clock overrides, and cursor placement over a
//! fragment.
//!
//! A date advances by `tempo · dt / 240` whole notes, with tempo in quarter
//! notes per minute and `dt` in seconds (60 s × 4 quarters per whole note).

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::layout::{GlyphSet, TimeMap};
use crate::rational::Rational;
use crate::scene::CursorSpec;

pub fn default_tempo() -> Rational {
    Rational::from_integer(60)
}

/// Whole notes covered in `dt` seconds at `tempo` quarters per minute.
pub fn date_advance(tempo: Rational, dt: Rational) -> Rational {
    tempo * dt / Rational::from_integer(240)
}

/// Date difference `a − b` between two cursors that started together and
/// ran `elapsed` seconds at constant tempi.
pub fn phase_offset(tempo_a: Rational, tempo_b: Rational, elapsed: Rational) -> Rational {
    (tempo_a - tempo_b) * elapsed / Rational::from_integer(240)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CursorClock {
    /// Own tempo; `None` follows the transport tempo.
    pub tempo: Option<Rational>,
    pub date: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transport {
    running: bool,
    tempo: Rational,
    date: Rational,
    /// Cursors reading at their own pace, keyed by node address. Cursors
    /// without an entry read at the transport date.
    overrides: BTreeMap<String, CursorClock>,
}

impl Default for Transport {
    fn default() -> Self {
        Transport {
            running: false,
            tempo: default_tempo(),
            date: Rational::zero(),
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("tempo must be positive")]
    NonPositiveTempo,
    #[error("date must not be negative")]
    NegativeDate,
    #[error("time step must not be negative")]
    NegativeStep,
}

impl Transport {
    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn tempo(&self) -> Rational {
        self.tempo
    }

    pub fn date(&self) -> Rational {
        self.date
    }

    pub fn start(&mut self) {
        self.running = true;
    }

    pub fn stop(&mut self) {
        self.running = false;
    }

    pub fn set_tempo(&mut self, tempo: Rational) -> Result<(), TransportError> {
        if !tempo.is_positive() {
            return Err(TransportError::NonPositiveTempo);
        }
        self.tempo = tempo;
        Ok(())
    }

    pub fn set_date(&mut self, date: Rational) -> Result<(), TransportError> {
        if date.is_negative() {
            return Err(TransportError::NegativeDate);
        }
        self.date = date;
        Ok(())
    }

    /// Advances every running date by `dt` seconds; a paused transport
    /// changes nothing.
    pub fn tick(&mut self, dt: Rational) -> Result<(), TransportError> {
        if dt.is_negative() {
            return Err(TransportError::NegativeStep);
        }
        if !self.running || dt.is_zero() {
            return Ok(());
        }
        self.date += date_advance(self.tempo, dt);
        for clock in self.overrides.values_mut() {
            clock.date += date_advance(clock.tempo.unwrap_or(self.tempo), dt);
        }
        Ok(())
    }

    pub fn cursor_date(&self, address: &str) -> Rational {
        self.overrides.get(address).map_or(self.date, |c| c.date)
    }

    pub fn cursor_tempo(&self, address: &str) -> Rational {
        self.overrides.get(address).and_then(|c| c.tempo).unwrap_or(self.tempo)
    }

    pub fn cursor_clock(&self, address: &str) -> Option<&CursorClock> {
        self.overrides.get(address)
    }

    fn clock_mut(&mut self, address: &str) -> &mut CursorClock {
        let date = self.date;
        self.overrides
            .entry(address.to_owned())
            .or_insert(CursorClock { tempo: None, date })
    }

    /// Gives a cursor its own tempo. Its date forks from the transport date
    /// if it was not already independent.
    pub fn set_cursor_tempo(&mut self, address: &str, tempo: Rational) -> Result<(), TransportError> {
        if !tempo.is_positive() {
            return Err(TransportError::NonPositiveTempo);
        }
        self.clock_mut(address).tempo = Some(tempo);
        Ok(())
    }

    pub fn set_cursor_date(&mut self, address: &str, date: Rational) -> Result<(), TransportError> {
        if date.is_negative() {
            return Err(TransportError::NegativeDate);
        }
        self.clock_mut(address).date = date;
        Ok(())
    }

    pub fn remove_cursor(&mut self, address: &str) {
        self.overrides.remove(address);
    }
}

/// Where a cursor sits over its target fragment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CursorState {
    /// Fragment-local position of the top of the playhead.
    pub x: f64,
    pub y: f64,
    /// Length of the playhead line (the fragment height).
    pub length: f64,
    pub active: bool,
}

/// Positions `cursor` at `date` over a fragment laid out as `glyphs`/`map`.
///
/// `x` follows the fragment's date→x map. `y` is the top edge offset by the
/// bend path, interpolated at `x / width`; with no bend the playhead is a
/// straight vertical line over the full fragment height. Past the end the
/// cursor clamps and goes inactive, or wraps when `looping`.
pub fn cursor_position(
    cursor: &CursorSpec,
    date: Rational,
    glyphs: &GlyphSet,
    map: &TimeMap,
    looping: bool,
) -> CursorState {
    let end = map.end_date();
    let (date, active) = if date.is_negative() {
        (Rational::zero(), false)
    } else if date <= end {
        (date, true)
    } else if looping && end.is_positive() {
        (date % end, true)
    } else {
        (end, false)
    };
    let x = map.x_at_date(date);
    let normalized = if glyphs.width > 0.0 { x / glyphs.width } else { 0.0 };
    CursorState {
        x,
        y: bend_offset(&cursor.path_bend, normalized),
        length: glyphs.height,
        active,
    }
}

/// Piecewise-linear interpolation of the bend control points, held constant
/// beyond the first and last points.
pub fn bend_offset(points: &[(f64, f64)], at: f64) -> f64 {
    match points {
        [] => 0.0,
        [(_, y)] => *y,
        _ => {
            let upper = points.partition_point(|(x, _)| *x <= at);
            if upper == 0 {
                return points[0].1;
            }
            if upper == points.len() {
                return points[points.len() - 1].1;
            }
            let (x0, y0) = points[upper - 1];
            let (x1, y1) = points[upper];
            y0 + (at - x0) / (x1 - x0) * (y1 - y0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmn::parse;
    use crate::layout::{layout_fragment, LayoutStyle};
    use crate::scene::Rgb;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn running(tempo: i64) -> Transport {
        let mut t = Transport::default();
        t.set_tempo(Rational::from_integer(tempo)).unwrap();
        t.start();
        t
    }

    #[test]
    fn tick_advances_by_tempo() {
        let mut t = running(60);
        t.tick(r(2, 1)).unwrap();
        assert_eq!(t.date(), r(1, 2));

        let mut t = running(90);
        t.tick(r(4, 1)).unwrap();
        assert_eq!(t.date(), r(3, 2));
    }

    #[test]
    fn paused_transport_holds() {
        let mut t = running(60);
        t.set_cursor_tempo("/scene/c", r(90, 1)).unwrap();
        t.stop();
        t.tick(r(10, 1)).unwrap();
        assert_eq!(t.date(), Rational::zero());
        assert_eq!(t.cursor_date("/scene/c"), Rational::zero());
    }

    #[test]
    fn stop_start_preserves_date() {
        let mut t = running(60);
        t.tick(r(3, 10)).unwrap();
        let before = t.date();
        t.stop();
        t.start();
        assert_eq!(t.date(), before);
    }

    #[test]
    fn negative_step_and_tempo_are_rejected() {
        let mut t = running(60);
        assert_eq!(t.tick(r(-1, 1)), Err(TransportError::NegativeStep));
        assert_eq!(t.set_tempo(Rational::zero()), Err(TransportError::NonPositiveTempo));
        assert_eq!(t.set_date(r(-1, 4)), Err(TransportError::NegativeDate));
    }

    #[test]
    fn cursor_overrides_run_independently() {
        let mut t = running(60);
        t.set_cursor_tempo("/scene/a", r(60, 1)).unwrap();
        t.set_cursor_tempo("/scene/b", r(90, 1)).unwrap();
        t.tick(r(4, 1)).unwrap();
        let offset = t.cursor_date("/scene/a") - t.cursor_date("/scene/b");
        assert_eq!(offset, r(-1, 2));
        assert_eq!(t.cursor_date("/scene/unset"), t.date());
    }

    #[test]
    fn phase_offset_examples() {
        let i = Rational::from_integer;
        assert_eq!(phase_offset(i(60), i(90), i(4)), r(-1, 2));
        assert_eq!(phase_offset(i(75), i(75), i(1000)), Rational::zero());
        assert_eq!(phase_offset(i(120), i(60), i(2)), r(1, 2));
    }

    fn cursor(bend: Vec<(f64, f64)>) -> CursorSpec {
        CursorSpec {
            performer: 1,
            color: Rgb(255, 0, 0),
            target: "/scene/frag1".into(),
            path_bend: bend,
        }
    }

    #[test]
    fn cursor_follows_time_map() {
        let ast = parse("[c d e f]").unwrap();
        let style = LayoutStyle::default();
        let (glyphs, map) = layout_fragment(&ast, &style);

        let start = cursor_position(&cursor(vec![]), Rational::zero(), &glyphs, &map, false);
        assert_eq!((start.x, start.y, start.active), (0.1, 0.0, true));
        assert_eq!(start.length, glyphs.height);

        let mid = cursor_position(&cursor(vec![]), r(1, 2), &glyphs, &map, false);
        assert!((mid.x - 0.55).abs() < 1e-12);

        let bent = cursor(vec![(0.0, 0.0), (1.0, 0.2)]);
        let end = cursor_position(&bent, r(1, 1), &glyphs, &map, false);
        assert!((end.y - 0.2).abs() < 1e-12);
        assert!(end.active);

        let past = cursor_position(&bent, r(5, 4), &glyphs, &map, false);
        assert!(!past.active);
        assert_eq!(past.x, 1.0);

        let looped = cursor_position(&bent, r(5, 4), &glyphs, &map, true);
        assert!(looped.active);
        assert!((looped.x - 0.325).abs() < 1e-12);
    }

    #[test]
    fn bend_interpolation() {
        let pts = [(0.0, 0.0), (0.5, 0.1), (1.0, -0.1)];
        assert_eq!(bend_offset(&pts, 0.25), 0.05);
        assert!((bend_offset(&pts, 0.75) - 0.0).abs() < 1e-12);
        assert_eq!(bend_offset(&pts, 2.0), -0.1);
        assert_eq!(bend_offset(&[(0.3, 0.4)], 0.0), 0.4);
        assert_eq!(bend_offset(&[], 0.5), 0.0);
    }
}
