//! Framing of the UI stream: 1 type byte, u32 little-endian payload length, payload.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const POSE: u8 = 0x01;
pub const AUDIO: u8 = 0x02;
pub const STATE: u8 = 0x03;
pub const ERROR: u8 = 0x04;
pub const CONFIG_PATCH: u8 = 0x05;

pub const HEADER_LEN: usize = 5;
pub const POSE_LEN: usize = 13;
/// Payloads above this size are treated as protocol violations.
pub const MAX_PAYLOAD: usize = 1 << 20;

/// Client steering input. `marker` is an opaque client value echoed in state
/// snapshots (used for latency measurement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub dx: f32,
    pub dy: f32,
    pub inject: bool,
    pub marker: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Pose(Pose),
    Audio { index: u32, samples: Vec<i16> },
    State(String),
    Error(String),
    ConfigPatch(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("message type 0x{kind:02x}: bad payload length {len}")]
    Length { kind: u8, len: usize },
    #[error("payload is not UTF-8")]
    Utf8,
    #[error("inject flag must be 0 or 1, got {0}")]
    Inject(u8),
    #[error("non-finite pose component")]
    NonFinite,
}

impl Pose {
    pub fn encode_payload(&self) -> [u8; POSE_LEN] {
        let mut b = [0u8; POSE_LEN];
        b[0..4].copy_from_slice(&self.dx.to_le_bytes());
        b[4..8].copy_from_slice(&self.dy.to_le_bytes());
        b[8] = u8::from(self.inject);
        b[9..13].copy_from_slice(&self.marker.to_le_bytes());
        b
    }

    pub fn decode_payload(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() != POSE_LEN {
            return Err(ProtocolError::Length {
                kind: POSE,
                len: b.len(),
            });
        }
        let f = |i: usize| f32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        let (dx, dy) = (f(0), f(4));
        if !dx.is_finite() || !dy.is_finite() {
            return Err(ProtocolError::NonFinite);
        }
        let inject = match b[8] {
            0 => false,
            1 => true,
            v => return Err(ProtocolError::Inject(v)),
        };
        Ok(Self {
            dx,
            dy,
            inject,
            marker: u32::from_le_bytes([b[9], b[10], b[11], b[12]]),
        })
    }
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Pose(_) => POSE,
            Message::Audio { .. } => AUDIO,
            Message::State(_) => STATE,
            Message::Error(_) => ERROR,
            Message::ConfigPatch(_) => CONFIG_PATCH,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Message::Pose(p) => p.encode_payload().to_vec(),
            Message::Audio { index, samples } => {
                let mut b = Vec::with_capacity(4 + 2 * samples.len());
                b.extend_from_slice(&index.to_le_bytes());
                for s in samples {
                    b.extend_from_slice(&s.to_le_bytes());
                }
                b
            }
            Message::State(s) | Message::Error(s) | Message::ConfigPatch(s) => s.as_bytes().to_vec(),
        }
    }

    /// Full frame bytes (header and payload).
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.push(self.kind());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes one payload of the given type.
    pub fn decode(kind: u8, payload: &[u8]) -> Result<Self, ProtocolError> {
        let text = || String::from_utf8(payload.to_vec()).map_err(|_| ProtocolError::Utf8);
        match kind {
            POSE => Ok(Message::Pose(Pose::decode_payload(payload)?)),
            AUDIO => {
                if payload.len() < 4 || !payload.len().is_multiple_of(2) {
                    return Err(ProtocolError::Length {
                        kind,
                        len: payload.len(),
                    });
                }
                let index = u32::from_le_bytes([payload[0], payload[1], payload[2], payload[3]]);
                let samples = payload[4..]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                Ok(Message::Audio { index, samples })
            }
            STATE => Ok(Message::State(text()?)),
            ERROR => Ok(Message::Error(text()?)),
            CONFIG_PATCH => Ok(Message::ConfigPatch(text()?)),
            other => Err(ProtocolError::UnknownType(other)),
        }
    }
}

/// Parses a header; rejects unknown types and oversized payloads.
pub fn parse_header(h: [u8; HEADER_LEN]) -> Result<(u8, usize), ProtocolError> {
    let kind = h[0];
    if !(POSE..=CONFIG_PATCH).contains(&kind) {
        return Err(ProtocolError::UnknownType(kind));
    }
    let len = u32::from_le_bytes([h[1], h[2], h[3], h[4]]) as usize;
    if len > MAX_PAYLOAD || (kind == POSE && len != POSE_LEN) {
        return Err(ProtocolError::Length { kind, len });
    }
    Ok((kind, len))
}

/// Incremental decoder over a byte stream. After a bad header it skips one
/// byte and tries again, so it resynchronizes at the next valid header.
#[derive(Debug, Default)]
pub struct Decoder {
    buf: Vec<u8>,
    errors: u64,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn errors(&self) -> u64 {
        self.errors
    }

    /// Next complete message, `Some(Err)` for a violation, `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Option<Result<Message, ProtocolError>> {
        if self.buf.len() < HEADER_LEN {
            return None;
        }
        let h: [u8; HEADER_LEN] = self.buf[..HEADER_LEN].try_into().expect("header length");
        match parse_header(h) {
            Err(e) => {
                self.buf.drain(..1);
                self.errors += 1;
                Some(Err(e))
            }
            Ok((kind, len)) => {
                if self.buf.len() < HEADER_LEN + len {
                    return None;
                }
                let result = Message::decode(kind, &self.buf[HEADER_LEN..HEADER_LEN + len]);
                self.buf.drain(..HEADER_LEN + len);
                if result.is_err() {
                    self.errors += 1;
                }
                Some(result)
            }
        }
    }
}

pub fn write_message(w: &mut impl Write, m: &Message) -> io::Result<()> {
    w.write_all(&m.encode())
}

/// Blocking read of one message. Framing errors surface as `InvalidData`.
pub fn read_message(r: &mut impl Read) -> io::Result<Result<Message, ProtocolError>> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let (kind, len) = match parse_header(h) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Message::decode(kind, &payload))
}
