//! The addressable scene graph that every OSC message targets.
//!
//! Nodes live directly under `/scene` (`/scene/frag1`, `/scene/cur1`, ...)
//! and carry a score fragment, a cursor or a text label plus an [`AttrSet`].
//! Messages use a verb dialect: the first argument names the verb.
//!
//! ```text
//! /scene/frag1 set gmn "[c d e f]"
//! /scene/frag1 alpha 128
//! /scene/*     angle 90.0
//! /scene/cur1  set cursor 1 "/scene/frag1" 255 0 0
//! /scene/transport start
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gmn::{self, ParseError, Position, ScoreAst};
use crate::layout::{self, GlyphSet, LayoutStyle, TimeMap};
use crate::osc::{coerce, OscArg, OscMessage, OscPacket, Scalar, ScalarKind};
use crate::rational::{self, Rational};
use crate::timemodel::{cursor_position, CursorState, Transport, TransportError};

pub const ROOT: &str = "/scene";
pub const TRANSPORT_ADDRESS: &str = "/scene/transport";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rgb({},{},{})", self.0, self.1, self.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shadow {
    pub dx: f64,
    pub dy: f64,
    pub alpha: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttrSet {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// Degrees, stored unwrapped.
    pub angle: f64,
    pub alpha: u8,
    pub color: Rgb,
    /// Blur radius in scene units.
    pub blur: f64,
    pub shadow: Option<Shadow>,
    pub date: Rational,
    /// Cursor wraps around its fragment instead of stopping at the end.
    #[serde(rename = "loop")]
    pub looping: bool,
}

impl Default for AttrSet {
    fn default() -> Self {
        AttrSet {
            x: 0.0,
            y: 0.0,
            scale: 1.0,
            angle: 0.0,
            alpha: 255,
            color: Rgb::BLACK,
            blur: 0.0,
            shadow: None,
            date: Rational::zero(),
            looping: false,
        }
    }
}

/// Every writable attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attr {
    X,
    Y,
    Scale,
    Angle,
    Alpha,
    Color,
    Blur,
    Shadow,
    Date,
    Tempo,
    Loop,
}

impl Attr {
    pub const ALL: [Attr; 11] = [
        Attr::X,
        Attr::Y,
        Attr::Scale,
        Attr::Angle,
        Attr::Alpha,
        Attr::Color,
        Attr::Blur,
        Attr::Shadow,
        Attr::Date,
        Attr::Tempo,
        Attr::Loop,
    ];

    pub fn from_name(name: &str) -> Option<Attr> {
        Attr::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Attr::X => "x",
            Attr::Y => "y",
            Attr::Scale => "scale",
            Attr::Angle => "angle",
            Attr::Alpha => "alpha",
            Attr::Color => "color",
            Attr::Blur => "blur",
            Attr::Shadow => "shadow",
            Attr::Date => "date",
            Attr::Tempo => "tempo",
            Attr::Loop => "loop",
        }
    }

    /// Scalar shape for single-number attributes; `None` for tuples.
    pub fn scalar_kind(self) -> Option<ScalarKind> {
        match self {
            Attr::X | Attr::Y | Attr::Scale | Attr::Angle | Attr::Blur | Attr::Tempo => Some(ScalarKind::Float),
            Attr::Alpha => Some(ScalarKind::Byte),
            Attr::Loop => Some(ScalarKind::Int),
            Attr::Color | Attr::Shadow | Attr::Date => None,
        }
    }

    /// Accepted argument counts.
    pub fn arities(self) -> &'static [usize] {
        match self {
            Attr::Color => &[3],
            Attr::Shadow => &[0, 1, 3],
            Attr::Date => &[1, 2],
            _ => &[1],
        }
    }

    pub fn cursor_only(self) -> bool {
        matches!(self, Attr::Tempo | Attr::Loop)
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Value as stored after coercion and clamping.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Byte(u8),
    Color(Rgb),
    Shadow(Option<Shadow>),
    Date(#[serde(serialize_with = "serialize_rational")] Rational),
    Flag(bool),
}

impl AttrValue {
    /// OSC arguments that would set this value again.
    pub fn to_osc_args(&self) -> Vec<OscArg> {
        match self {
            AttrValue::Number(v) => vec![OscArg::Float(*v as f32)],
            AttrValue::Byte(v) => vec![OscArg::Int(i32::from(*v))],
            AttrValue::Color(c) => vec![
                OscArg::Int(c.0.into()),
                OscArg::Int(c.1.into()),
                OscArg::Int(c.2.into()),
            ],
            AttrValue::Shadow(None) => vec![OscArg::Int(0)],
            AttrValue::Shadow(Some(s)) => vec![
                OscArg::Float(s.dx as f32),
                OscArg::Float(s.dy as f32),
                OscArg::Int(s.alpha.into()),
            ],
            AttrValue::Date(d) => vec![
                OscArg::Int(i32::try_from(*d.numer()).unwrap_or(i32::MAX)),
                OscArg::Int(i32::try_from(*d.denom()).unwrap_or(i32::MAX)),
            ],
            AttrValue::Flag(b) => vec![OscArg::Int(i32::from(*b))],
        }
    }
}

/// Cursor definition: which performer, what color, which fragment it runs
/// over and how its playhead bends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CursorSpec {
    pub performer: u32,
    pub color: Rgb,
    pub target: String,
    /// `(x ∈ [0,1], y-offset)` control points, x strictly increasing.
    pub path_bend: Vec<(f64, f64)>,
}

impl CursorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if let Some((x, _)) = self
            .path_bend
            .iter()
            .find(|(x, y)| !(0.0..=1.0).contains(x) || !y.is_finite())
        {
            return Err(format!("bend point x={x} outside [0,1]"));
        }
        if self.path_bend.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err("bend points must have strictly increasing x".into());
        }
        Ok(())
    }
}

/// Laid-out glyphs plus their content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub glyphs: Arc<GlyphSet>,
    /// Lowercase SHA-256 hex of the glyph set's JSON form.
    pub hash: String,
}

impl Geometry {
    pub fn new(glyphs: GlyphSet) -> Geometry {
        let json = serde_json::to_vec(&glyphs).expect("glyph sets serialize");
        let digest = Sha256::digest(&json);
        let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Geometry {
            glyphs: Arc::new(glyphs),
            hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Fragment {
        ast: Arc<ScoreAst>,
        timemap: Arc<TimeMap>,
        geometry: Geometry,
    },
    Cursor(CursorSpec),
    Text {
        content: String,
        geometry: Geometry,
    },
}

/// What a node is built from.
#[derive(Debug, Clone, PartialEq)]
pub enum PayloadSpec {
    Gmn(String),
    Cursor(CursorSpec),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    #[serde(rename = "gmn-fragment")]
    Fragment,
    #[serde(rename = "cursor-line")]
    Cursor,
    #[serde(rename = "text")]
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub address: String,
    pub payload: Payload,
    pub attrs: AttrSet,
}

impl SceneNode {
    pub fn kind(&self) -> NodeKind {
        match self.payload {
            Payload::Fragment { .. } => NodeKind::Fragment,
            Payload::Cursor(_) => NodeKind::Cursor,
            Payload::Text { .. } => NodeKind::Text,
        }
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        match &self.payload {
            Payload::Fragment { geometry, .. } | Payload::Text { geometry, .. } => Some(geometry),
            Payload::Cursor(_) => None,
        }
    }

    pub fn cursor(&self) -> Option<&CursorSpec> {
        match &self.payload {
            Payload::Cursor(spec) => Some(spec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("address already in use: {0}")]
    DuplicateAddress(String),
    #[error("bad address {0:?}: expected /scene/<name> with name in [A-Za-z0-9_]")]
    BadAddress(String),
    #[error("bad payload for {address}: {reason}")]
    BadPayload {
        address: String,
        reason: String,
        position: Option<Position>,
    },
    #[error("no node at {0}")]
    UnknownAddress(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("cannot use value for {attr}: {reason}")]
    UncoercibleValue { attr: String, reason: String },
    #[error("no node matches {0}")]
    NoMatch(String),
    #[error("malformed message {message}: {reason}")]
    MalformedVerb { message: String, reason: String },
}

impl SceneError {
    fn uncoercible(attr: impl fmt::Display, reason: impl Into<String>) -> SceneError {
        SceneError::UncoercibleValue {
            attr: attr.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<TransportError> for SceneError {
    fn from(err: TransportError) -> Self {
        SceneError::uncoercible("transport", err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportChange {
    Started,
    Stopped,
    Tempo(Rational),
    Date(Rational),
}

/// One observable consequence of a dispatched message.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Created(String),
    Replaced(String),
    Deleted(String),
    Attr {
        address: String,
        attr: Attr,
        value: AttrValue,
    },
    Transport(TransportChange),
    /// A `get` answer for the sender's return channel.
    Reply(OscMessage),
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct DispatchOutcome {
    pub effects: Vec<Effect>,
    pub errors: Vec<SceneError>,
    /// Messages that produced at least one effect.
    pub applied: usize,
}

/// Checks `/scene/<name>`.
pub fn validate_address(address: &str) -> Result<(), SceneError> {
    let bad = || SceneError::BadAddress(address.to_owned());
    let name = address
        .strip_prefix(ROOT)
        .and_then(|rest| rest.strip_prefix('/'))
        .ok_or_else(bad)?;
    let valid = !name.is_empty()
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
        && address != TRANSPORT_ADDRESS;
    if valid {
        Ok(())
    } else {
        Err(bad())
    }
}

/// Segment-wise match where `*` inside a segment matches any run of
/// characters within that segment.
pub fn pattern_matches(pattern: &str, address: &str) -> bool {
    let mut p = pattern.split('/');
    let mut a = address.split('/');
    loop {
        match (p.next(), a.next()) {
            (None, None) => return true,
            (Some(ps), Some(as_)) if segment_matches(ps.as_bytes(), as_.as_bytes()) => {}
            _ => return false,
        }
    }
}

fn segment_matches(pattern: &[u8], text: &[u8]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some((b'*', rest)) => (0..=text.len()).any(|skip| segment_matches(rest, &text[skip..])),
        Some((c, rest)) => text.first() == Some(c) && segment_matches(rest, &text[1..]),
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    nodes: BTreeMap<String, SceneNode>,
    transport: Transport,
    style: LayoutStyle,
    revision: u64,
}

impl Default for Scene {
    fn default() -> Self {
        Scene::new(LayoutStyle::default())
    }
}

impl Scene {
    pub fn new(style: LayoutStyle) -> Scene {
        Scene {
            nodes: BTreeMap::new(),
            transport: Transport::default(),
            style,
            revision: 0,
        }
    }

    pub fn node(&self, address: &str) -> Option<&SceneNode> {
        self.nodes.get(address)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut Transport {
        &mut self.transport
    }

    /// Bumped by every mutation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn style(&self) -> &LayoutStyle {
        &self.style
    }

    fn build_payload(&self, address: &str, spec: PayloadSpec) -> Result<Payload, SceneError> {
        match spec {
            PayloadSpec::Gmn(text) => {
                let ast = gmn::parse(&text).map_err(|err: ParseError| SceneError::BadPayload {
                    address: address.to_owned(),
                    position: err.position(),
                    reason: err.to_string(),
                })?;
                let (glyphs, timemap) = layout::layout_fragment(&ast, &self.style);
                Ok(Payload::Fragment {
                    ast: Arc::new(ast),
                    timemap: Arc::new(timemap),
                    geometry: Geometry::new(glyphs),
                })
            }
            PayloadSpec::Cursor(spec) => {
                spec.validate().map_err(|reason| SceneError::BadPayload {
                    address: address.to_owned(),
                    reason,
                    position: None,
                })?;
                Ok(Payload::Cursor(spec))
            }
            PayloadSpec::Text(content) => {
                let glyphs = layout::layout_text(&content, &self.style);
                Ok(Payload::Text {
                    content,
                    geometry: Geometry::new(glyphs),
                })
            }
        }
    }

    /// Adds a node with default attributes.
    pub fn create_node(&mut self, address: &str, spec: PayloadSpec) -> Result<&SceneNode, SceneError> {
        validate_address(address)?;
        if self.nodes.contains_key(address) {
            return Err(SceneError::DuplicateAddress(address.to_owned()));
        }
        let payload = self.build_payload(address, spec)?;
        self.insert_new(address, payload);
        Ok(&self.nodes[address])
    }

    fn insert_new(&mut self, address: &str, payload: Payload) {
        let mut attrs = AttrSet::default();
        if let Payload::Cursor(spec) = &payload {
            attrs.color = spec.color;
            attrs.date = self.transport.cursor_date(address);
        }
        self.nodes.insert(
            address.to_owned(),
            SceneNode {
                address: address.to_owned(),
                payload,
                attrs,
            },
        );
        self.revision += 1;
    }

    /// Replaces the payload of an existing node, keeping its attributes, or
    /// creates it.
    pub fn set_payload(&mut self, address: &str, spec: PayloadSpec) -> Result<Effect, SceneError> {
        validate_address(address)?;
        let payload = self.build_payload(address, spec)?;
        Ok(self.put_payload(address, payload))
    }

    fn put_payload(&mut self, address: &str, payload: Payload) -> Effect {
        match self.nodes.get_mut(address) {
            Some(node) => {
                if let Payload::Cursor(spec) = &payload {
                    if node.cursor().map(|c| c.color) != Some(spec.color) {
                        node.attrs.color = spec.color;
                    }
                } else {
                    self.transport.remove_cursor(address);
                }
                node.payload = payload;
                self.revision += 1;
                Effect::Replaced(address.to_owned())
            }
            None => {
                self.insert_new(address, payload);
                Effect::Created(address.to_owned())
            }
        }
    }

    pub fn delete_node(&mut self, address: &str) -> Result<(), SceneError> {
        self.nodes
            .remove(address)
            .ok_or_else(|| SceneError::UnknownAddress(address.to_owned()))?;
        self.transport.remove_cursor(address);
        self.revision += 1;
        Ok(())
    }

    /// Coerces, clamps and stores one attribute; returns what was stored.
    pub fn set_attr(&mut self, address: &str, key: &str, args: &[OscArg]) -> Result<AttrValue, SceneError> {
        let node = self
            .nodes
            .get(address)
            .ok_or_else(|| SceneError::UnknownAddress(address.to_owned()))?;
        let attr = Attr::from_name(key).ok_or_else(|| SceneError::UnknownAttribute(key.to_owned()))?;
        check_applicable(node, attr)?;
        let value = compute_attr(attr, args)?;
        self.store_attr(address, attr, value.clone())?;
        Ok(value)
    }

    fn store_attr(&mut self, address: &str, attr: Attr, value: AttrValue) -> Result<(), SceneError> {
        let is_cursor = self.nodes.get(address).is_some_and(|n| n.kind() == NodeKind::Cursor);
        match (attr, &value) {
            (Attr::Date, AttrValue::Date(date)) if is_cursor => {
                self.transport.set_cursor_date(address, *date)?;
            }
            (Attr::Tempo, AttrValue::Number(_)) => {
                let tempo = tempo_rational(&value)?;
                self.transport.set_cursor_tempo(address, tempo)?;
            }
            _ => {}
        }
        let date = self.transport.cursor_date(address);
        let node = self
            .nodes
            .get_mut(address)
            .ok_or_else(|| SceneError::UnknownAddress(address.to_owned()))?;
        let attrs = &mut node.attrs;
        match (attr, value) {
            (Attr::X, AttrValue::Number(v)) => attrs.x = v,
            (Attr::Y, AttrValue::Number(v)) => attrs.y = v,
            (Attr::Scale, AttrValue::Number(v)) => attrs.scale = v,
            (Attr::Angle, AttrValue::Number(v)) => attrs.angle = v,
            (Attr::Blur, AttrValue::Number(v)) => attrs.blur = v,
            (Attr::Alpha, AttrValue::Byte(v)) => attrs.alpha = v,
            (Attr::Color, AttrValue::Color(c)) => attrs.color = c,
            (Attr::Shadow, AttrValue::Shadow(s)) => attrs.shadow = s,
            (Attr::Date, AttrValue::Date(d)) => attrs.date = if is_cursor { date } else { d },
            (Attr::Loop, AttrValue::Flag(b)) => attrs.looping = b,
            (Attr::Tempo, _) => {}
            (attr, value) => unreachable!("{attr} cannot hold {value:?}"),
        }
        self.revision += 1;
        Ok(())
    }

    /// Applies every message of `packet` in order. Each message is atomic:
    /// either all matched nodes change or none do. Failures are collected,
    /// never fatal.
    pub fn dispatch(&mut self, packet: &OscPacket) -> DispatchOutcome {
        let mut outcome = DispatchOutcome::default();
        for (_, message) in packet.flatten() {
            match self.dispatch_message(message) {
                Ok(effects) => {
                    if !effects.is_empty() {
                        outcome.applied += 1;
                    }
                    outcome.effects.extend(effects);
                }
                Err(err) => {
                    log::warn!("{message}: {err}");
                    outcome.errors.push(err);
                }
            }
        }
        outcome
    }

    pub fn dispatch_message(&mut self, message: &OscMessage) -> Result<Vec<Effect>, SceneError> {
        let malformed = |reason: &str| SceneError::MalformedVerb {
            message: message.to_string(),
            reason: reason.to_owned(),
        };
        let Some(verb) = message.args.first().and_then(OscArg::as_str) else {
            return Err(malformed("first argument must be a verb string"));
        };
        let args = &message.args[1..];
        if message.address == TRANSPORT_ADDRESS {
            return self.dispatch_transport(verb, args).map_err(|err| match err {
                SceneError::MalformedVerb { reason, .. } => malformed(&reason),
                other => other,
            });
        }

        let has_wildcard = message.address.contains('*');
        let targets: Vec<String> = if has_wildcard {
            self.nodes
                .keys()
                .filter(|a| pattern_matches(&message.address, a))
                .cloned()
                .collect()
        } else if verb == "set" || self.nodes.contains_key(&message.address) {
            vec![message.address.clone()]
        } else {
            Vec::new()
        };
        if targets.is_empty() {
            return Err(SceneError::NoMatch(message.address.clone()));
        }

        match verb {
            "set" => {
                let spec = payload_spec(args).map_err(|reason| malformed(&reason))?;
                let mut payloads = Vec::with_capacity(targets.len());
                for address in &targets {
                    validate_address(address)?;
                    payloads.push(self.build_payload(address, spec.clone())?);
                }
                Ok(targets
                    .iter()
                    .zip(payloads)
                    .map(|(address, payload)| self.put_payload(address, payload))
                    .collect())
            }
            "del" => {
                for address in &targets {
                    self.delete_node(address)?;
                }
                Ok(targets.into_iter().map(Effect::Deleted).collect())
            }
            "get" => {
                let only = match args.first() {
                    None => None,
                    Some(OscArg::Str(name)) => {
                        Some(Attr::from_name(name).ok_or_else(|| SceneError::UnknownAttribute(name.clone()))?)
                    }
                    Some(_) => return Err(malformed("get takes an optional attribute name")),
                };
                Ok(targets
                    .iter()
                    .flat_map(|address| self.describe(address, only))
                    .map(Effect::Reply)
                    .collect())
            }
            name => {
                let attr = Attr::from_name(name).ok_or_else(|| SceneError::UnknownAttribute(name.to_owned()))?;
                let value = compute_attr(attr, args)?;
                for address in &targets {
                    check_applicable(&self.nodes[address], attr)?;
                }
                let mut effects = Vec::with_capacity(targets.len());
                for address in targets {
                    self.store_attr(&address, attr, value.clone())?;
                    effects.push(Effect::Attr {
                        address,
                        attr,
                        value: value.clone(),
                    });
                }
                Ok(effects)
            }
        }
    }

    fn dispatch_transport(&mut self, verb: &str, args: &[OscArg]) -> Result<Vec<Effect>, SceneError> {
        let change = match verb {
            "start" => {
                self.transport.start();
                TransportChange::Started
            }
            "stop" => {
                self.transport.stop();
                TransportChange::Stopped
            }
            "tempo" => {
                let tempo = tempo_rational(&compute_attr(Attr::Tempo, args)?)?;
                self.transport.set_tempo(tempo)?;
                TransportChange::Tempo(tempo)
            }
            "date" => {
                let AttrValue::Date(date) = compute_attr(Attr::Date, args)? else {
                    unreachable!("date attribute yields a date")
                };
                self.transport.set_date(date)?;
                self.sync_cursor_dates();
                TransportChange::Date(date)
            }
            other => {
                return Err(SceneError::MalformedVerb {
                    message: String::new(),
                    reason: format!("unknown transport verb {other:?}"),
                })
            }
        };
        self.revision += 1;
        Ok(vec![Effect::Transport(change)])
    }

    /// `get` replies: one message per attribute in the input dialect, plus a
    /// `hint` with the vertical displacement read as semitones for
    /// fragments (12 per staff height, upward positive).
    fn describe(&self, address: &str, only: Option<Attr>) -> Vec<OscMessage> {
        let Some(node) = self.nodes.get(address) else {
            return Vec::new();
        };
        let is_cursor = node.kind() == NodeKind::Cursor;
        let mut replies: Vec<OscMessage> = Attr::ALL
            .into_iter()
            .filter(|a| only.is_none_or(|o| o == *a))
            .filter(|a| is_cursor || !a.cursor_only())
            .map(|attr| {
                let value = match attr {
                    Attr::Tempo => AttrValue::Number(rational::to_f64(&self.transport.cursor_tempo(address))),
                    _ => read_attr(&node.attrs, attr),
                };
                let mut args = vec![OscArg::Str(attr.name().to_owned())];
                args.extend(value.to_osc_args());
                OscMessage::new(address, args)
            })
            .collect();
        if only.is_none() {
            if let Payload::Fragment { geometry, .. } = &node.payload {
                let staff = geometry.glyphs.staff_height * node.attrs.scale;
                let semitones = (-node.attrs.y / staff * 12.0).round() as i32;
                replies.push(OscMessage::new(address, vec!["hint".into(), OscArg::Int(semitones)]));
            }
        }
        replies
    }

    /// Advances the transport by `dt` seconds.
    pub fn tick(&mut self, dt: Rational) -> Result<(), TransportError> {
        if dt.is_zero() || !self.transport.is_running() {
            return self.transport.tick(dt);
        }
        self.transport.tick(dt)?;
        self.sync_cursor_dates();
        self.revision += 1;
        Ok(())
    }

    fn sync_cursor_dates(&mut self) {
        for node in self.nodes.values_mut() {
            if node.kind() == NodeKind::Cursor {
                node.attrs.date = self.transport.cursor_date(&node.address);
            }
        }
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            nodes: self.nodes.clone(),
            transport: self.transport.clone(),
            revision: self.revision,
        }
    }
}

fn check_applicable(node: &SceneNode, attr: Attr) -> Result<(), SceneError> {
    if attr.cursor_only() && node.kind() != NodeKind::Cursor {
        return Err(SceneError::UnknownAttribute(format!(
            "{attr} (only cursors have it; {} is a {:?})",
            node.address,
            node.kind()
        )));
    }
    Ok(())
}

fn tempo_rational(value: &AttrValue) -> Result<Rational, SceneError> {
    match value {
        AttrValue::Number(v) => rational::from_f64_thousandths(*v)
            .filter(Signed::is_positive)
            .ok_or_else(|| SceneError::uncoercible(Attr::Tempo, "tempo must be positive")),
        _ => Err(SceneError::uncoercible(Attr::Tempo, "tempo must be a number")),
    }
}

fn read_attr(attrs: &AttrSet, attr: Attr) -> AttrValue {
    match attr {
        Attr::X => AttrValue::Number(attrs.x),
        Attr::Y => AttrValue::Number(attrs.y),
        Attr::Scale => AttrValue::Number(attrs.scale),
        Attr::Angle => AttrValue::Number(attrs.angle),
        Attr::Alpha => AttrValue::Byte(attrs.alpha),
        Attr::Color => AttrValue::Color(attrs.color),
        Attr::Blur => AttrValue::Number(attrs.blur),
        Attr::Shadow => AttrValue::Shadow(attrs.shadow),
        Attr::Date => AttrValue::Date(attrs.date),
        Attr::Tempo => AttrValue::Number(0.0),
        Attr::Loop => AttrValue::Flag(attrs.looping),
    }
}

fn number(attr: Attr, arg: &OscArg, kind: ScalarKind) -> Result<Scalar, SceneError> {
    coerce(arg, kind).map_err(|err| SceneError::uncoercible(attr, err.to_string()))
}

fn byte(attr: Attr, arg: &OscArg) -> Result<u8, SceneError> {
    let Scalar::Int(v) = number(attr, arg, ScalarKind::Byte)? else {
        unreachable!("byte coercion yields integers")
    };
    Ok(v.clamp(0, 255) as u8)
}

fn finite(attr: Attr, arg: &OscArg) -> Result<f64, SceneError> {
    let v = number(attr, arg, ScalarKind::Float)?.as_f64();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SceneError::uncoercible(attr, "value must be finite"))
    }
}

/// Validates, coerces and clamps an attribute write without touching the
/// scene.
pub fn compute_attr(attr: Attr, args: &[OscArg]) -> Result<AttrValue, SceneError> {
    if !attr.arities().contains(&args.len()) {
        return Err(SceneError::uncoercible(
            attr,
            format!("expected {:?} arguments, got {}", attr.arities(), args.len()),
        ));
    }
    Ok(match attr {
        Attr::X | Attr::Y | Attr::Angle => AttrValue::Number(finite(attr, &args[0])?),
        Attr::Scale => {
            let v = finite(attr, &args[0])?;
            if v <= 0.0 {
                return Err(SceneError::uncoercible(attr, "scale must be positive"));
            }
            AttrValue::Number(v)
        }
        Attr::Blur => AttrValue::Number(finite(attr, &args[0])?.max(0.0)),
        Attr::Tempo => {
            let v = finite(attr, &args[0])?;
            if v <= 0.0 {
                return Err(SceneError::uncoercible(attr, "tempo must be positive"));
            }
            AttrValue::Number(v)
        }
        Attr::Alpha => AttrValue::Byte(byte(attr, &args[0])?),
        Attr::Color => AttrValue::Color(Rgb(byte(attr, &args[0])?, byte(attr, &args[1])?, byte(attr, &args[2])?)),
        Attr::Shadow => match args {
            [] => AttrValue::Shadow(None),
            [single] => match number(attr, single, ScalarKind::Int)? {
                Scalar::Int(0) => AttrValue::Shadow(None),
                _ => {
                    return Err(SceneError::uncoercible(
                        attr,
                        "use `shadow 0` to clear or `shadow dx dy alpha`",
                    ))
                }
            },
            [dx, dy, alpha] => AttrValue::Shadow(Some(Shadow {
                dx: finite(attr, dx)?,
                dy: finite(attr, dy)?,
                alpha: byte(attr, alpha)?,
            })),
            _ => unreachable!("arity checked"),
        },
        Attr::Date => {
            let date = match args {
                [OscArg::Int(num), OscArg::Int(den)] if *den != 0 => Rational::new(i64::from(*num), i64::from(*den)),
                [OscArg::Int(_), OscArg::Int(_)] => return Err(SceneError::uncoercible(attr, "zero denominator")),
                [single] => {
                    let v = finite(attr, single)?;
                    rational::from_f64_thousandths(v).ok_or_else(|| SceneError::uncoercible(attr, "out of range"))?
                }
                _ => {
                    return Err(SceneError::uncoercible(
                        attr,
                        "date takes <num> <den> integers or one number",
                    ))
                }
            };
            if date.is_negative() {
                return Err(SceneError::uncoercible(attr, "date must not be negative"));
            }
            AttrValue::Date(date)
        }
        Attr::Loop => AttrValue::Flag(number(attr, &args[0], ScalarKind::Int)?.as_f64() != 0.0),
    })
}

/// Parses the arguments after `set`: `gmn <text>`, `text <text>` or
/// `cursor <performer> <target> <r> <g> <b> [<x> <y>]...`.
pub fn payload_spec(args: &[OscArg]) -> Result<PayloadSpec, String> {
    let kind = args
        .first()
        .and_then(OscArg::as_str)
        .ok_or("set needs a kind: gmn, cursor or text")?;
    let rest = &args[1..];
    match kind {
        "gmn" => match rest {
            [OscArg::Str(text)] => Ok(PayloadSpec::Gmn(text.clone())),
            _ => Err("set gmn takes one string".into()),
        },
        "text" => match rest {
            [OscArg::Str(text)] => Ok(PayloadSpec::Text(text.clone())),
            _ => Err("set text takes one string".into()),
        },
        "cursor" => {
            if rest.len() < 5 || !(rest.len() - 5).is_multiple_of(2) {
                return Err("set cursor takes <performer> <target> <r> <g> <b> [<x> <y>]...".into());
            }
            let performer = match coerce(&rest[0], ScalarKind::Int).map_err(|e| e.to_string())? {
                Scalar::Int(v) if (0..=i64::from(u32::MAX)).contains(&v) => v as u32,
                _ => return Err("performer must be a non-negative integer".into()),
            };
            let target = rest[1]
                .as_str()
                .ok_or("cursor target must be an address string")?
                .to_owned();
            let channel = |arg: &OscArg| match coerce(arg, ScalarKind::Byte) {
                Ok(Scalar::Int(v)) => Ok(v.clamp(0, 255) as u8),
                Ok(Scalar::Float(_)) => unreachable!("byte coercion yields integers"),
                Err(e) => Err(e.to_string()),
            };
            let color = Rgb(channel(&rest[2])?, channel(&rest[3])?, channel(&rest[4])?);
            let float = |arg: &OscArg| {
                coerce(arg, ScalarKind::Float)
                    .map(Scalar::as_f64)
                    .map_err(|e| e.to_string())
            };
            let path_bend = rest[5..]
                .chunks(2)
                .map(|pair| Ok((float(&pair[0])?, float(&pair[1])?)))
                .collect::<Result<Vec<_>, String>>()?;
            Ok(PayloadSpec::Cursor(CursorSpec {
                performer,
                color,
                target,
                path_bend,
            }))
        }
        other => Err(format!("unknown node kind {other:?}")),
    }
}

/// Immutable copy of the scene for renderers.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    nodes: BTreeMap<String, SceneNode>,
    transport: Transport,
    revision: u64,
}

impl SceneSnapshot {
    pub fn nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values()
    }

    pub fn node(&self, address: &str) -> Option<&SceneNode> {
        self.nodes.get(address)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// The fragment a cursor runs over, if it still exists.
    pub fn cursor_target(&self, cursor: &SceneNode) -> Option<&SceneNode> {
        let spec = cursor.cursor()?;
        self.nodes.get(&spec.target).filter(|n| n.kind() == NodeKind::Fragment)
    }

    /// Cursor placement in its target's local frame; `None` when the target
    /// is gone (the cursor is inactive).
    pub fn cursor_state(&self, cursor: &SceneNode) -> Option<CursorState> {
        let spec = cursor.cursor()?;
        let target = self.cursor_target(cursor)?;
        let Payload::Fragment { timemap, geometry, .. } = &target.payload else {
            return None;
        };
        let date = self.transport.cursor_date(&cursor.address);
        Some(cursor_position(
            spec,
            date,
            &geometry.glyphs,
            timemap,
            cursor.attrs.looping,
        ))
    }
}

fn serialize_rational<S: serde::Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(value))
}
