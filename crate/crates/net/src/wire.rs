//! Length-prefixed binary framing.
//!
//! A frame is `len: u32 BE | tag: u8 | payload`, with `len` counting the tag
//! and payload. Integers inside payloads are little-endian, reals are IEEE-754
//! binary64 little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const PROTOCOL_VERSION: u16 = 1;
pub const MAX_FRAME_LEN: u32 = 16 << 20;

pub mod tag {
    pub const HELLO: u8 = 0x01;
    pub const SUBSPACE_OUTCOMES: u8 = 0x02;
    pub const PAIRING: u8 = 0x03;
    pub const QTRANSFER: u8 = 0x04;
    pub const SWAP_RESULTS: u8 = 0x05;
    pub const ESTIMATE: u8 = 0x06;
    pub const MEASURE_REQ: u8 = 0x07;
    pub const MEASURE_RESP: u8 = 0x08;
    pub const ERROR: u8 = 0x09;
    pub const ROUND: u8 = 0x0a;
    pub const CONFIG: u8 = 0x0b;
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("unknown type tag {0:#04x}")]
    UnknownTag(u8),
    #[error("frame length {0} outside [1, {MAX_FRAME_LEN}]")]
    BadLength(u32),
    #[error("payload of tag {tag:#04x} truncated")]
    Truncated { tag: u8 },
    #[error("{extra} trailing bytes after tag {tag:#04x}")]
    TrailingBytes { tag: u8, extra: usize },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Referee,
    Alice,
    Bob,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Referee => 0,
            Role::Alice => 1,
            Role::Bob => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Role::Referee),
            1 => Some(Role::Alice),
            2 => Some(Role::Bob),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateStatus {
    Ok,
    NoPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundAction {
    Begin,
    Finish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    VersionMismatch,
    OutOfOrder,
    OwnershipViolation,
    Malformed,
    InvalidPairing,
    Other(u8),
}

impl ErrorCode {
    pub fn code(self) -> u8 {
        match self {
            ErrorCode::VersionMismatch => 1,
            ErrorCode::OutOfOrder => 2,
            ErrorCode::OwnershipViolation => 3,
            ErrorCode::Malformed => 4,
            ErrorCode::InvalidPairing => 5,
            ErrorCode::Other(c) => c,
        }
    }

    pub fn from_code(c: u8) -> Self {
        match c {
            1 => ErrorCode::VersionMismatch,
            2 => ErrorCode::OutOfOrder,
            3 => ErrorCode::OwnershipViolation,
            4 => ErrorCode::Malformed,
            5 => ErrorCode::InvalidPairing,
            c => ErrorCode::Other(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WirePair {
    pub alice: u32,
    pub bob: u32,
    pub block: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub d: u32,
    pub q: u32,
    pub k: u32,
    pub target_pairs: u32,
    pub max_rounds: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        role: Role,
        version: u16,
        seed: u64,
    },
    SubspaceOutcomes {
        blocks: Vec<u16>,
    },
    Pairing {
        pairs: Vec<WirePair>,
    },
    /// Moves ownership of Alice's register to Bob. Carries no amplitudes.
    QTransfer {
        register: u32,
        dimension: u32,
    },
    SwapResults {
        bits: Vec<bool>,
    },
    Estimate {
        value: f64,
        status: EstimateStatus,
    },
    /// Block measurement of one of the sender's copies.
    MeasureCopy {
        round: u32,
        copy: u32,
    },
    /// SWAP tests on `(alice register, bob copy)` pairs held by the sender.
    MeasureSwap {
        round: u32,
        pairs: Vec<(u32, u32)>,
    },
    MeasureResp {
        round: u32,
        copy: u32,
        block: u16,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Round {
        round: u32,
        action: RoundAction,
    },
    Config(RunConfig),
}

const MEASURE_COPY: u8 = 0;
const MEASURE_SWAP: u8 = 1;

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => tag::HELLO,
            Message::SubspaceOutcomes { .. } => tag::SUBSPACE_OUTCOMES,
            Message::Pairing { .. } => tag::PAIRING,
            Message::QTransfer { .. } => tag::QTRANSFER,
            Message::SwapResults { .. } => tag::SWAP_RESULTS,
            Message::Estimate { .. } => tag::ESTIMATE,
            Message::MeasureCopy { .. } | Message::MeasureSwap { .. } => tag::MEASURE_REQ,
            Message::MeasureResp { .. } => tag::MEASURE_RESP,
            Message::Error { .. } => tag::ERROR,
            Message::Round { .. } => tag::ROUND,
            Message::Config(_) => tag::CONFIG,
        }
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello { role, version, seed } => {
                out.push(role.code());
                out.extend(version.to_le_bytes());
                out.extend(seed.to_le_bytes());
            }
            Message::SubspaceOutcomes { blocks } => {
                out.extend((blocks.len() as u32).to_le_bytes());
                blocks.iter().for_each(|b| out.extend(b.to_le_bytes()));
            }
            Message::Pairing { pairs } => {
                out.extend((pairs.len() as u32).to_le_bytes());
                for p in pairs {
                    out.extend(p.alice.to_le_bytes());
                    out.extend(p.bob.to_le_bytes());
                    out.extend(p.block.to_le_bytes());
                }
            }
            Message::QTransfer { register, dimension } => {
                out.extend(register.to_le_bytes());
                out.extend(dimension.to_le_bytes());
            }
            Message::SwapResults { bits } => {
                out.extend((bits.len() as u32).to_le_bytes());
                let mut packed = vec![0u8; bits.len().div_ceil(8)];
                for (i, &b) in bits.iter().enumerate() {
                    if b {
                        packed[i / 8] |= 1 << (i % 8);
                    }
                }
                out.extend(packed);
            }
            Message::Estimate { value, status } => {
                out.extend(value.to_le_bytes());
                out.push(match status {
                    EstimateStatus::Ok => 0,
                    EstimateStatus::NoPairs => 1,
                });
            }
            Message::MeasureCopy { round, copy } => {
                out.push(MEASURE_COPY);
                out.extend(round.to_le_bytes());
                out.extend(copy.to_le_bytes());
            }
            Message::MeasureSwap { round, pairs } => {
                out.push(MEASURE_SWAP);
                out.extend(round.to_le_bytes());
                out.extend((pairs.len() as u32).to_le_bytes());
                for (a, b) in pairs {
                    out.extend(a.to_le_bytes());
                    out.extend(b.to_le_bytes());
                }
            }
            Message::MeasureResp { round, copy, block } => {
                out.push(MEASURE_COPY);
                out.extend(round.to_le_bytes());
                out.extend(copy.to_le_bytes());
                out.extend(block.to_le_bytes());
            }
            Message::Error { code, message } => {
                out.push(code.code());
                out.extend(message.as_bytes());
            }
            Message::Round { round, action } => {
                out.extend(round.to_le_bytes());
                out.push(match action {
                    RoundAction::Begin => 0,
                    RoundAction::Finish => 1,
                });
            }
            Message::Config(c) => {
                for v in [c.d, c.q, c.k, c.target_pairs, c.max_rounds] {
                    out.extend(v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let len = (payload.len() + 1) as u32;
        let mut out = Vec::with_capacity(payload.len() + 5);
        out.extend(len.to_be_bytes());
        out.push(self.tag());
        out.extend(payload);
        out
    }

    pub fn decode(tag_byte: u8, payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader { buf: payload, tag: tag_byte };
        let msg = match tag_byte {
            tag::HELLO => {
                let role = r.u8()?;
                let role = Role::from_code(role).ok_or_else(|| WireError::InvalidField(format!("role {role}")))?;
                Message::Hello { role, version: r.u16()?, seed: r.u64()? }
            }
            tag::SUBSPACE_OUTCOMES => {
                let n = r.count(2)?;
                Message::SubspaceOutcomes { blocks: (0..n).map(|_| r.u16()).collect::<Result<_, _>>()? }
            }
            tag::PAIRING => {
                let n = r.count(10)?;
                let pairs = (0..n)
                    .map(|_| Ok(WirePair { alice: r.u32()?, bob: r.u32()?, block: r.u16()? }))
                    .collect::<Result<_, WireError>>()?;
                Message::Pairing { pairs }
            }
            tag::QTRANSFER => Message::QTransfer { register: r.u32()?, dimension: r.u32()? },
            tag::SWAP_RESULTS => {
                let n = r.u32()? as usize;
                let packed = r.take(n.div_ceil(8))?;
                if !n.is_multiple_of(8) && packed[n / 8] >> (n % 8) != 0 {
                    return Err(WireError::InvalidField("padding bits set in SWAP_RESULTS".into()));
                }
                Message::SwapResults { bits: (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect() }
            }
            tag::ESTIMATE => {
                let value = f64::from_le_bytes(r.array()?);
                let status = match r.u8()? {
                    0 => EstimateStatus::Ok,
                    1 => EstimateStatus::NoPairs,
                    s => return Err(WireError::InvalidField(format!("estimate status {s}"))),
                };
                Message::Estimate { value, status }
            }
            tag::MEASURE_REQ => match r.u8()? {
                MEASURE_COPY => Message::MeasureCopy { round: r.u32()?, copy: r.u32()? },
                MEASURE_SWAP => {
                    let round = r.u32()?;
                    let n = r.count(8)?;
                    let pairs = (0..n).map(|_| Ok((r.u32()?, r.u32()?))).collect::<Result<_, WireError>>()?;
                    Message::MeasureSwap { round, pairs }
                }
                k => return Err(WireError::InvalidField(format!("measurement kind {k}"))),
            },
            tag::MEASURE_RESP => match r.u8()? {
                MEASURE_COPY => Message::MeasureResp { round: r.u32()?, copy: r.u32()?, block: r.u16()? },
                k => return Err(WireError::InvalidField(format!("response kind {k}"))),
            },
            tag::ERROR => {
                let code = ErrorCode::from_code(r.u8()?);
                let rest = r.take(r.buf.len())?;
                let message = String::from_utf8(rest.to_vec())
                    .map_err(|_| WireError::InvalidField("error message is not UTF-8".into()))?;
                Message::Error { code, message }
            }
            tag::ROUND => {
                let round = r.u32()?;
                let action = match r.u8()? {
                    0 => RoundAction::Begin,
                    1 => RoundAction::Finish,
                    a => return Err(WireError::InvalidField(format!("round action {a}"))),
                };
                Message::Round { round, action }
            }
            tag::CONFIG => Message::Config(RunConfig {
                d: r.u32()?,
                q: r.u32()?,
                k: r.u32()?,
                target_pairs: r.u32()?,
                max_rounds: r.u32()?,
            }),
            t => return Err(WireError::UnknownTag(t)),
        };
        if !r.buf.is_empty() {
            return Err(WireError::TrailingBytes { tag: tag_byte, extra: r.buf.len() });
        }
        Ok(msg)
    }
}

pub fn tag_name(t: u8) -> &'static str {
    match t {
        tag::HELLO => "HELLO",
        tag::SUBSPACE_OUTCOMES => "SUBSPACE_OUTCOMES",
        tag::PAIRING => "PAIRING",
        tag::QTRANSFER => "QTRANSFER",
        tag::SWAP_RESULTS => "SWAP_RESULTS",
        tag::ESTIMATE => "ESTIMATE",
        tag::MEASURE_REQ => "MEASURE_REQ",
        tag::MEASURE_RESP => "MEASURE_RESP",
        tag::ERROR => "ERROR",
        tag::ROUND => "ROUND",
        tag::CONFIG => "CONFIG",
        _ => "UNKNOWN",
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    tag: u8,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated { tag: self.tag });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// Element count, checked against the bytes actually present.
    fn count(&mut self, elem: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem) > self.buf.len() {
            return Err(WireError::Truncated { tag: self.tag });
        }
        Ok(n)
    }
}

/// A decoded frame together with its size on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub message: Message,
    /// Prefix + tag + payload.
    pub byte_length: usize,
    pub payload_length: usize,
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<Frame> {
    let bytes = msg.encode();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(Frame { message: msg.clone(), byte_length: bytes.len(), payload_length: bytes.len() - 5 })
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(WireError::BadLength(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    let message = Message::decode(body[0], &body[1..])?;
    Ok(Frame { message, byte_length: len as usize + 4, payload_length: len as usize - 1 })
}
