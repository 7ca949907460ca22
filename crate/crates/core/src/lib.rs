//! Engine for animated music notation.
//!
//! Score fragments written in a subset of GUIDO Music Notation are parsed
//! ([`gmn`]), laid out as vector glyphs with a date→x map ([`layout`]) and
//! placed in an addressable scene graph ([`scene`]). The scene is driven by
//! OSC messages ([`osc`]) coming from the network or from a scripted
//! [`sequencer`] timeline, advanced by a rational time model ([`timemodel`])
//! and projected to SVG frames or a JSON state feed ([`render`]).

pub mod engine;
pub mod geom;
pub mod gmn;
pub mod layout;
pub mod osc;
pub mod rational;
pub mod render;
pub mod scene;
pub mod sequencer;
pub mod timemodel;

pub use rational::Rational;
