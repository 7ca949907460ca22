//! OSC 1.0 over UDP: packet types, the wire codec, numeric coercion for
//! attribute writes and the datagram listener.

mod codec;
mod coerce;
mod server;

use std::fmt;

pub use codec::{decode, encode, CodecError, MAX_BUNDLE_DEPTH};
pub use coerce::{coerce, CoerceError, Scalar, ScalarKind};
pub use server::{serve, Incoming, ListenerHandle, ServeError};

/// One typed OSC argument (`i`, `f`, `s` or `b`).
#[derive(Debug, Clone)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
    Blob(Vec<u8>),
}

impl OscArg {
    pub fn type_tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
            OscArg::Blob(_) => b'b',
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            OscArg::Str(s) => Some(s),
            _ => None,
        }
    }
}

/// Floats compare by bit pattern so that NaN payloads round-trip.
impl PartialEq for OscArg {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (OscArg::Int(a), OscArg::Int(b)) => a == b,
            (OscArg::Float(a), OscArg::Float(b)) => a.to_bits() == b.to_bits(),
            (OscArg::Str(a), OscArg::Str(b)) => a == b,
            (OscArg::Blob(a), OscArg::Blob(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for OscArg {}

impl From<i32> for OscArg {
    fn from(v: i32) -> Self {
        OscArg::Int(v)
    }
}

impl From<f32> for OscArg {
    fn from(v: f32) -> Self {
        OscArg::Float(v)
    }
}

impl From<&str> for OscArg {
    fn from(v: &str) -> Self {
        OscArg::Str(v.to_owned())
    }
}

impl From<String> for OscArg {
    fn from(v: String) -> Self {
        OscArg::Str(v)
    }
}

impl fmt::Display for OscArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OscArg::Int(v) => write!(f, "{v}"),
            OscArg::Float(v) => write!(f, "{v:?}"),
            OscArg::Str(s) => write!(f, "{s:?}"),
            OscArg::Blob(b) => write!(f, "<blob {} bytes>", b.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        OscMessage {
            address: address.into(),
            args,
        }
    }
}

impl fmt::Display for OscMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.address)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        Ok(())
    }
}

/// NTP-style 32.32 fixed-point timestamp, seconds since 1900-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timetag(pub u64);

/// Seconds between the NTP epoch (1900) and the Unix epoch (1970).
const NTP_UNIX_OFFSET: u64 = 2_208_988_800;

impl Timetag {
    pub const IMMEDIATE: Timetag = Timetag(1);

    pub fn is_immediate(self) -> bool {
        self == Timetag::IMMEDIATE
    }

    pub fn from_system_time(time: std::time::SystemTime) -> Timetag {
        let since_unix = time.duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        let seconds = since_unix.as_secs() + NTP_UNIX_OFFSET;
        let fraction = (u64::from(since_unix.subsec_nanos()) << 32) / 1_000_000_000;
        Timetag((seconds << 32) | fraction)
    }

    /// `None` for the immediate tag.
    pub fn to_system_time(self) -> Option<std::time::SystemTime> {
        if self.is_immediate() {
            return None;
        }
        let seconds = self.0 >> 32;
        let fraction = self.0 & 0xFFFF_FFFF;
        let nanos = (fraction * 1_000_000_000) >> 32;
        let base = std::time::UNIX_EPOCH;
        Some(if seconds >= NTP_UNIX_OFFSET {
            base + std::time::Duration::new(seconds - NTP_UNIX_OFFSET, nanos as u32)
        } else {
            base
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OscBundle {
    pub timetag: Timetag,
    pub elements: Vec<OscPacket>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OscPacket {
    Message(OscMessage),
    Bundle(OscBundle),
}

impl From<OscMessage> for OscPacket {
    fn from(m: OscMessage) -> Self {
        OscPacket::Message(m)
    }
}

impl OscPacket {
    /// Messages in depth-first order, each paired with the timetag of its
    /// innermost enclosing bundle (`IMMEDIATE` for bare messages).
    pub fn flatten(&self) -> Vec<(Timetag, &OscMessage)> {
        let mut out = Vec::new();
        flatten_into(self, Timetag::IMMEDIATE, &mut out);
        out
    }
}

fn flatten_into<'a>(packet: &'a OscPacket, tag: Timetag, out: &mut Vec<(Timetag, &'a OscMessage)>) {
    match packet {
        OscPacket::Message(m) => out.push((tag, m)),
        OscPacket::Bundle(b) => {
            for element in &b.elements {
                flatten_into(element, b.timetag, out);
            }
        }
    }
}
