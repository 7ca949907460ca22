use thiserror::Error;

use super::{OscArg, OscBundle, OscMessage, OscPacket, Timetag};

/// Deepest bundle nesting accepted by [`decode`].
pub const MAX_BUNDLE_DEPTH: usize = 16;

const BUNDLE_HEADER: &[u8; 8] = b"#bundle\0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("string is not ASCII or contains NUL")]
    NonAsciiString,
    #[error("address pattern must start with `/`")]
    AddressMissingSlash,
    #[error("packet truncated at byte {0}")]
    TruncatedPacket(usize),
    #[error("type tag string missing or malformed at byte {0}")]
    BadTypeTag(usize),
    #[error("bad padding or alignment at byte {0}")]
    BadPadding(usize),
    #[error("bundles nested deeper than {MAX_BUNDLE_DEPTH}")]
    DepthLimitExceeded,
    #[error("element too large to encode")]
    TooLarge,
}

fn padded_len(len: usize) -> usize {
    (len + 3) & !3
}

pub fn encode(packet: &OscPacket) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    encode_into(packet, &mut out)?;
    debug_assert_eq!(out.len() % 4, 0);
    Ok(out)
}

fn encode_into(packet: &OscPacket, out: &mut Vec<u8>) -> Result<(), CodecError> {
    match packet {
        OscPacket::Message(message) => encode_message(message, out),
        OscPacket::Bundle(bundle) => {
            out.extend_from_slice(BUNDLE_HEADER);
            out.extend_from_slice(&bundle.timetag.0.to_be_bytes());
            for element in &bundle.elements {
                let size_at = out.len();
                out.extend_from_slice(&[0; 4]);
                encode_into(element, out)?;
                let size = i32::try_from(out.len() - size_at - 4).map_err(|_| CodecError::TooLarge)?;
                out[size_at..size_at + 4].copy_from_slice(&size.to_be_bytes());
            }
            Ok(())
        }
    }
}

fn encode_message(message: &OscMessage, out: &mut Vec<u8>) -> Result<(), CodecError> {
    if !message.address.starts_with('/') {
        return Err(CodecError::AddressMissingSlash);
    }
    write_string(&message.address, out)?;
    let mut tags = String::with_capacity(message.args.len() + 1);
    tags.push(',');
    tags.extend(message.args.iter().map(|a| a.type_tag() as char));
    write_string(&tags, out)?;
    for arg in &message.args {
        match arg {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
            OscArg::Str(s) => write_string(s, out)?,
            OscArg::Blob(bytes) => {
                let len = i32::try_from(bytes.len()).map_err(|_| CodecError::TooLarge)?;
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(bytes);
                out.resize(padded_len(out.len()), 0);
            }
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) -> Result<(), CodecError> {
    if !s.bytes().all(|b| b.is_ascii() && b != 0) {
        return Err(CodecError::NonAsciiString);
    }
    out.extend_from_slice(s.as_bytes());
    // At least one NUL, then pad to a multiple of four.
    out.push(0);
    out.resize(padded_len(out.len()), 0);
    Ok(())
}

/// Decodes one datagram. Never panics; any malformed input yields an error.
pub fn decode(bytes: &[u8]) -> Result<OscPacket, CodecError> {
    decode_at_depth(bytes, 0, 0)
}

/// `base` is the offset of `bytes` within the outer datagram, for error positions.
fn decode_at_depth(bytes: &[u8], depth: usize, base: usize) -> Result<OscPacket, CodecError> {
    if bytes.is_empty() {
        return Err(CodecError::TruncatedPacket(base));
    }
    if !bytes.len().is_multiple_of(4) {
        return Err(CodecError::BadPadding(base + bytes.len()));
    }
    if bytes.starts_with(BUNDLE_HEADER) {
        if depth >= MAX_BUNDLE_DEPTH {
            return Err(CodecError::DepthLimitExceeded);
        }
        decode_bundle(bytes, depth + 1, base).map(OscPacket::Bundle)
    } else {
        decode_message(bytes, base).map(OscPacket::Message)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn at(&self) -> usize {
        self.base + self.pos
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::TruncatedPacket(self.base + self.bytes.len()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn word(&mut self) -> Result<[u8; 4], CodecError> {
        let slice = self.take(4)?;
        Ok([slice[0], slice[1], slice[2], slice[3]])
    }

    fn padding(&mut self, len: usize) -> Result<(), CodecError> {
        let at = self.at();
        let pad = self.take(padded_len(len) - len)?;
        if pad.iter().any(|b| *b != 0) {
            return Err(CodecError::BadPadding(at));
        }
        Ok(())
    }

    fn string(&mut self) -> Result<&'a str, CodecError> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let Some(nul) = rest.iter().position(|b| *b == 0) else {
            return Err(CodecError::TruncatedPacket(self.base + self.bytes.len()));
        };
        let text = &rest[..nul];
        if !text.is_ascii() {
            return Err(CodecError::NonAsciiString);
        }
        self.pos += nul + 1;
        self.padding(nul + 1)?;
        // Every byte checked ASCII above.
        Ok(std::str::from_utf8(text).expect("ascii"))
    }
}

fn decode_message(bytes: &[u8], base: usize) -> Result<OscMessage, CodecError> {
    let mut reader = Reader { bytes, pos: 0, base };
    if bytes.first() != Some(&b'/') {
        return Err(CodecError::AddressMissingSlash);
    }
    let address = reader.string()?.to_owned();

    let tag_at = reader.at();
    if reader.bytes.get(reader.pos) != Some(&b',') {
        return Err(CodecError::BadTypeTag(tag_at));
    }
    let tags = reader.string()?;
    let mut args = Vec::with_capacity(tags.len() - 1);
    for (i, tag) in tags.bytes().enumerate().skip(1) {
        let arg = match tag {
            b'i' => OscArg::Int(i32::from_be_bytes(reader.word()?)),
            b'f' => OscArg::Float(f32::from_bits(u32::from_be_bytes(reader.word()?))),
            b's' => OscArg::Str(reader.string()?.to_owned()),
            b'b' => {
                let len_at = reader.at();
                let len = i32::from_be_bytes(reader.word()?);
                let len = usize::try_from(len).map_err(|_| CodecError::TruncatedPacket(len_at))?;
                let data = reader.take(len)?.to_vec();
                reader.padding(len)?;
                OscArg::Blob(data)
            }
            _ => return Err(CodecError::BadTypeTag(tag_at + i)),
        };
        args.push(arg);
    }
    if reader.remaining() != 0 {
        return Err(CodecError::BadPadding(reader.at()));
    }
    Ok(OscMessage { address, args })
}

fn decode_bundle(bytes: &[u8], depth: usize, base: usize) -> Result<OscBundle, CodecError> {
    let mut reader = Reader { bytes, pos: 0, base };
    reader.take(BUNDLE_HEADER.len())?;
    let tag = reader.take(8)?;
    let timetag = Timetag(u64::from_be_bytes(tag.try_into().expect("eight bytes")));
    let mut elements = Vec::new();
    while reader.remaining() > 0 {
        let size_at = reader.at();
        let size = i32::from_be_bytes(reader.word()?);
        let size = usize::try_from(size).map_err(|_| CodecError::TruncatedPacket(size_at))?;
        if size % 4 != 0 {
            return Err(CodecError::BadPadding(size_at));
        }
        let element_base = reader.at();
        let element = reader.take(size)?;
        elements.push(decode_at_depth(element, depth, element_base)?);
    }
    Ok(OscBundle { timetag, elements })
}
