//! A framed TCP link that logs every frame it carries.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::wire::{read_frame, write_frame, ErrorCode, Frame, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub link: String,
    pub direction: Direction,
    pub type_tag: u8,
    pub byte_length: usize,
    /// Seconds since the owning process started its clock.
    pub monotonic_time: f64,
}

impl TranscriptEntry {
    /// Everything except the timestamp.
    pub fn key(&self) -> (String, Direction, u8, usize) {
        (self.link.clone(), self.direction, self.type_tag, self.byte_length)
    }
}

pub fn to_json_lines(entries: &[TranscriptEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
}

pub struct Channel {
    stream: TcpStream,
    link: String,
    clock: Instant,
    log: Vec<TranscriptEntry>,
}

impl Channel {
    pub fn new(stream: TcpStream, link: &str, clock: Instant, timeout: Duration) -> Result<Self> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, link: link.to_string(), clock, log: Vec::new() })
    }

    pub fn link(&self) -> &str {
        &self.link
    }

    /// Rename the link, including frames already logged.
    pub fn set_link(&mut self, link: &str) {
        self.link = link.to_string();
        self.log.iter_mut().for_each(|e| e.link = link.to_string());
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.log
    }

    pub fn into_transcript(self) -> Vec<TranscriptEntry> {
        self.log
    }

    fn record(&mut self, direction: Direction, frame: &Frame) {
        self.log.push(TranscriptEntry {
            link: self.link.clone(),
            direction,
            type_tag: frame.message.tag(),
            byte_length: frame.byte_length,
            monotonic_time: self.clock.elapsed().as_secs_f64(),
        });
    }

    pub fn send(&mut self, msg: &Message) -> Result<Frame> {
        let frame = write_frame(&mut self.stream, msg)?;
        self.record(Direction::Out, &frame);
        Ok(frame)
    }

    /// Next frame; an ERROR frame from the peer becomes [`NetError::Remote`].
    pub fn recv(&mut self) -> Result<Frame> {
        let frame = read_frame(&mut self.stream).map_err(|e| match NetError::from(e) {
            NetError::Timeout(_) => NetError::Timeout(format!("frame on link {}", self.link)),
            other => other,
        })?;
        self.record(Direction::In, &frame);
        if let Message::Error { code, message } = &frame.message {
            return Err(NetError::Remote { code: *code, message: message.clone() });
        }
        Ok(frame)
    }

    /// Report a violation to the peer, then return it as a local error.
    pub fn fail<T>(&mut self, code: ErrorCode, detail: impl Into<String>) -> Result<T> {
        let detail = detail.into();
        // best effort: the peer may already be gone
        let _ = self.send(&Message::Error { code, message: detail.clone() });
        Err(NetError::protocol(code, detail))
    }

    /// Receive and require a particular message shape.
    pub fn expect<T>(&mut self, what: &str, pick: impl FnOnce(Message) -> Option<T>) -> Result<(T, Frame)> {
        let frame = self.recv()?;
        let tag = frame.message.name();
        match pick(frame.message.clone()) {
            Some(v) => Ok((v, frame)),
            None => self.fail(ErrorCode::OutOfOrder, format!("expected {what}, got {tag}")),
        }
    }
}
