//! Deterministic timelines of scene messages: one-shot `at` events, linear
//! ramps and seeded random walks, sampled on a fixed tick grid.

mod play;
mod script;

pub use play::{play, PlayError, PlayMode, PlayReport, SceneSink, Sink, UdpSink};
pub use script::{load_script, ScriptError};

use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::osc::{OscArg, OscMessage, ScalarKind};
use crate::rational::{self, Rational};
use crate::scene::Attr;

pub fn default_tick() -> Rational {
    Rational::new(1, 50)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    At(OscMessage),
    Ramp {
        attr: Attr,
        kind: ScalarKind,
        from: Rational,
        to: Rational,
    },
    RandomWalk {
        attr: Attr,
        kind: ScalarKind,
        lo: Rational,
        hi: Rational,
        step_max: Rational,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    /// Seconds from the start of playback.
    pub start: Rational,
    /// Set for ramps and walks; always after `start`.
    pub end: Option<Rational>,
    pub address: String,
    /// Script line, for diagnostics.
    pub line: usize,
    pub kind: EventKind,
}

/// A message stamped with its playback time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMessage {
    pub time: Rational,
    pub message: OscMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    /// Sorted by start time; ties keep script order.
    pub events: Vec<TimelineEvent>,
    pub seed: u64,
    pub tick: Rational,
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            events: Vec::new(),
            seed: 0,
            tick: default_tick(),
        }
    }
}

impl Timeline {
    /// Time of the last emitted message.
    pub fn duration(&self) -> Rational {
        self.events
            .iter()
            .map(|e| e.end.unwrap_or(e.start))
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Every message with time in `[t0, t1)`, ordered by time and then by
    /// event order.
    pub fn events_between(&self, t0: Rational, t1: Rational) -> Vec<TimedMessage> {
        let mut out: Vec<(Rational, usize, TimedMessage)> = Vec::new();
        if t1 <= t0 {
            return Vec::new();
        }
        for (index, event) in self.events.iter().enumerate() {
            let end = event.end.unwrap_or(event.start);
            if end < t0 || event.start >= t1 {
                continue;
            }
            match &event.kind {
                EventKind::At(message) => out.push((
                    event.start,
                    index,
                    TimedMessage {
                        time: event.start,
                        message: message.clone(),
                    },
                )),
                EventKind::Ramp { attr, kind, from, to } => {
                    let length = end - event.start;
                    for time in self.samples(event.start, end).filter(|t| *t >= t0 && *t < t1) {
                        let value = *from + (time - event.start) / length * (*to - *from);
                        out.push((time, index, sample(&event.address, *attr, *kind, value, time)));
                    }
                }
                EventKind::RandomWalk {
                    attr,
                    kind,
                    lo,
                    hi,
                    step_max,
                } => {
                    // Replayed from the walk's start so any window split
                    // yields the same values.
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ splitmix64(index as u64));
                    let (lo_f, hi_f, step_f) = (rational::to_f64(lo), rational::to_f64(hi), rational::to_f64(step_max));
                    let mut value = (lo_f + hi_f) / 2.0;
                    for (n, time) in self.samples(event.start, end).enumerate() {
                        if time >= t1 {
                            break;
                        }
                        if n > 0 && step_f > 0.0 {
                            value = (value + rng.random_range(-step_f..=step_f)).clamp(lo_f, hi_f);
                        }
                        if time >= t0 {
                            let exact = rational::from_f64_thousandths(value).unwrap_or(*lo);
                            let msg = match kind {
                                ScalarKind::Float => TimedMessage {
                                    time,
                                    message: OscMessage::new(
                                        event.address.clone(),
                                        vec![attr.name().into(), OscArg::Float(value as f32)],
                                    ),
                                },
                                _ => sample(&event.address, *attr, *kind, exact, time),
                            };
                            out.push((time, index, msg));
                        }
                    }
                }
            }
        }
        out.sort_by_key(|(time, index, _)| (*time, *index));
        out.into_iter().map(|(_, _, m)| m).collect()
    }

    /// Every message of the timeline.
    pub fn all_messages(&self) -> Vec<TimedMessage> {
        self.events_between(Rational::zero(), self.duration() + Rational::from_integer(1))
    }

    /// `start`, every `start + k·tick` strictly inside, then `end`.
    fn samples(&self, start: Rational, end: Rational) -> impl Iterator<Item = Rational> + '_ {
        let tick = self.tick;
        let inner = ((end - start) / tick).ceil().to_integer();
        (0..inner)
            .map(move |k| start + tick * Rational::from_integer(k))
            .chain(std::iter::once(end))
    }
}

fn sample(address: &str, attr: Attr, kind: ScalarKind, value: Rational, time: Rational) -> TimedMessage {
    let arg = match kind {
        ScalarKind::Float => OscArg::Float(rational::to_f64(&value) as f32),
        // Ratio::round rounds half away from zero.
        _ => OscArg::Int(value.round().to_integer().to_i32().unwrap_or(if value.numer() < &0 {
            i32::MIN
        } else {
            i32::MAX
        })),
    };
    TimedMessage {
        time,
        message: OscMessage::new(address, vec![attr.name().into(), arg]),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn fade() -> Timeline {
        load_script("ramp 0 10 /scene/frag1 alpha 0 255").unwrap()
    }

    fn alphas(msgs: &[TimedMessage]) -> Vec<OscArg> {
        msgs.iter().map(|m| m.message.args[1].clone()).collect()
    }

    #[test]
    fn ramp_first_ticks() {
        let msgs = fade().events_between(r(0, 1), r(1, 25));
        assert_eq!(alphas(&msgs), [OscArg::Int(0), OscArg::Int(1)]);
        assert_eq!(msgs[1].time, r(1, 50));
    }

    #[test]
    fn ramp_end_emitted_once() {
        let msgs = fade().events_between(r(10, 1), r(11, 1));
        assert_eq!(alphas(&msgs), [OscArg::Int(255)]);
        let all = fade().all_messages();
        assert_eq!(all.len(), 501);
        assert_eq!(all.iter().filter(|m| m.message.args[1] == OscArg::Int(255)).count(), 1);
    }

    #[test]
    fn ramp_endpoints_exact_for_odd_ticks() {
        let mut t = load_script("ramp 0.5 1.3 /scene/f x -0.3 0.7").unwrap();
        t.tick = r(3, 10);
        let msgs = t.all_messages();
        let times: Vec<Rational> = msgs.iter().map(|m| m.time).collect();
        assert_eq!(times, [r(1, 2), r(4, 5), r(11, 10), r(13, 10)]);
        assert_eq!(msgs[0].message.args[1], OscArg::Float(-0.3));
        assert_eq!(msgs[3].message.args[1], OscArg::Float(0.7));
    }

    #[test]
    fn windows_concatenate() {
        let t = load_script(
            "at 0 /scene/f set gmn \"[c]\"\nramp 0 1 /scene/f alpha 0 255\nrandomwalk 0.1 0.9 /scene/f x -1 1 0.1\nat 0.5 /scene/f del",
        )
        .unwrap();
        let whole = t.events_between(r(0, 1), r(2, 1));
        for split in [r(0, 1), r(1, 100), r(1, 2), r(13, 37), r(1, 1), r(2, 1)] {
            let mut parts = t.events_between(r(0, 1), split);
            parts.extend(t.events_between(split, r(2, 1)));
            assert_eq!(parts, whole, "split at {split}");
        }
    }

    #[test]
    fn random_walk_is_seeded_and_bounded() {
        let script = "seed 42\nrandomwalk 0 5 /scene/f y -0.2 0.2 0.05";
        let a = load_script(script).unwrap().all_messages();
        let b = load_script(script).unwrap().all_messages();
        assert_eq!(a, b);
        assert_eq!(a[0].message.args[1], OscArg::Float(0.0));
        for m in &a {
            let OscArg::Float(v) = m.message.args[1] else { panic!() };
            assert!((-0.2..=0.2).contains(&v));
        }
        let mut other = load_script(script).unwrap();
        other.seed = 43;
        assert_ne!(other.all_messages(), a);
    }

    #[test]
    fn at_events_in_half_open_window() {
        let t = load_script("at 1 /scene/a del").unwrap();
        assert!(t.events_between(r(0, 1), r(1, 1)).is_empty());
        assert_eq!(t.events_between(r(1, 1), r(2, 1)).len(), 1);
        assert_eq!(t.duration(), r(1, 1));
    }
}
