//! Alice and Bob. Each sees only block indices, pairings and outcome bits.

use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use dipe_core::dipe::{block_is_pairable, estimate_from_counts, greedy_pairing};

use crate::channel::{Channel, TranscriptEntry};
use crate::error::{NetError, Result};
use crate::referee::estimate_frame;
use crate::wire::{ErrorCode, EstimateStatus, Message, Role, RoundAction, RunConfig, WirePair, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub role: Role,
    pub seed: u64,
    pub estimate: f64,
    pub status: EstimateStatus,
    pub rounds: usize,
    pub pairs: usize,
    /// Known to Bob only.
    pub successes: Option<usize>,
    pub transcript: Vec<TranscriptEntry>,
}

/// A client connection after the HELLO/CONFIG exchange.
pub struct Peer {
    pub channel: Channel,
    pub role: Role,
    pub seed: u64,
    pub config: RunConfig,
}

fn connect_before(addr: &str, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline && e.kind() == std::io::ErrorKind::ConnectionRefused => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

impl Peer {
    pub fn connect(addr: &str, role: Role, timeout: Duration) -> Result<Self> {
        Self::connect_with_version(addr, role, PROTOCOL_VERSION, timeout)
    }

    /// Handshake announcing an arbitrary protocol version.
    pub fn connect_with_version(addr: &str, role: Role, version: u16, timeout: Duration) -> Result<Self> {
        let clock = Instant::now();
        let stream = connect_before(addr, clock + timeout)?;
        let mut channel = Channel::new(stream, "referee", clock, timeout)?;
        channel.send(&Message::Hello { role, version, seed: 0 })?;
        let (seed, _) = channel.expect("HELLO", |m| match m {
            Message::Hello { role: Role::Referee, seed, .. } => Some(seed),
            _ => None,
        })?;
        let (config, _) = channel.expect("CONFIG", |m| match m {
            Message::Config(c) => Some(c),
            _ => None,
        })?;
        Ok(Self { channel, role, seed, config })
    }

    /// Wait for the referee's round decision; `None` means the run is over.
    pub fn next_round(&mut self) -> Result<Option<u32>> {
        let ((round, action), _) = self.channel.expect("ROUND", |m| match m {
            Message::Round { round, action } => Some((round, action)),
            _ => None,
        })?;
        Ok(match action {
            RoundAction::Begin => Some(round),
            RoundAction::Finish => None,
        })
    }

    /// Measure every copy of this round, one request per copy.
    pub fn measure_copies(&mut self, round: u32) -> Result<Vec<u16>> {
        (0..self.config.k)
            .map(|copy| {
                self.channel.send(&Message::MeasureCopy { round, copy })?;
                let ((r, c, block), _) = self.channel.expect("MEASURE_RESP", |m| match m {
                    Message::MeasureResp { round, copy, block } => Some((round, copy, block)),
                    _ => None,
                })?;
                if r != round || c != copy {
                    return self.channel.fail(ErrorCode::OutOfOrder, format!("response for copy {c} in round {r}"));
                }
                Ok(block)
            })
            .collect()
    }

    /// Send our outcomes and receive the other party's.
    pub fn exchange_outcomes(&mut self, mine: &[u16]) -> Result<Vec<u16>> {
        self.channel.send(&Message::SubspaceOutcomes { blocks: mine.to_vec() })?;
        let (theirs, _) = self.channel.expect("SUBSPACE_OUTCOMES", |m| match m {
            Message::SubspaceOutcomes { blocks } => Some(blocks),
            _ => None,
        })?;
        if theirs.len() != self.config.k as usize {
            return self
                .channel
                .fail(ErrorCode::Malformed, format!("{} outcomes for k = {}", theirs.len(), self.config.k));
        }
        Ok(theirs)
    }

    pub fn into_report(
        self,
        estimate: f64,
        status: EstimateStatus,
        rounds: usize,
        pairs: usize,
        successes: Option<usize>,
    ) -> ClientReport {
        ClientReport {
            role: self.role,
            seed: self.seed,
            estimate,
            status,
            rounds,
            pairs,
            successes,
            transcript: self.channel.into_transcript(),
        }
    }
}

/// Greedy pairing over the wire's block labels, identical to the in-process rule.
pub fn compute_pairing(config: &RunConfig, alice: &[u16], bob: &[u16], max_pairs: usize) -> Vec<WirePair> {
    let a: Vec<usize> = alice.iter().map(|&b| b as usize).collect();
    let b: Vec<usize> = bob.iter().map(|&b| b as usize).collect();
    let (d, q) = (config.d as usize, config.q as usize);
    greedy_pairing(&a, &b, max_pairs, |blk| block_is_pairable(d, q, blk))
        .into_iter()
        .map(|p| WirePair { alice: p.alice as u32, bob: p.bob as u32, block: p.block as u16 })
        .collect()
}

pub fn alice_run(addr: &str, timeout: Duration) -> Result<ClientReport> {
    let mut peer = Peer::connect(addr, Role::Alice, timeout)?;
    let (mut rounds, mut m) = (0usize, 0usize);
    while let Some(round) = peer.next_round()? {
        let mine = peer.measure_copies(round)?;
        let theirs = peer.exchange_outcomes(&mine)?;
        let remaining = (peer.config.target_pairs as usize).saturating_sub(m);
        let pairs = compute_pairing(&peer.config, &mine, &theirs, remaining);
        peer.channel.send(&Message::Pairing { pairs: pairs.clone() })?;
        for p in &pairs {
            peer.channel.send(&Message::QTransfer { register: p.alice, dimension: peer.config.q })?;
        }
        m += pairs.len();
        rounds += 1;
    }
    let ((value, status), _) = peer.channel.expect("ESTIMATE", |msg| match msg {
        Message::Estimate { value, status } => Some((value, status)),
        _ => None,
    })?;
    Ok(peer.into_report(value, status, rounds, m, None))
}

pub fn bob_run(addr: &str, timeout: Duration) -> Result<ClientReport> {
    let mut peer = Peer::connect(addr, Role::Bob, timeout)?;
    let (mut rounds, mut m, mut s) = (0usize, 0usize, 0usize);
    while let Some(round) = peer.next_round()? {
        let mine = peer.measure_copies(round)?;
        peer.exchange_outcomes(&mine)?;
        let (pairs, _) = peer.channel.expect("PAIRING", |msg| match msg {
            Message::Pairing { pairs } => Some(pairs),
            _ => None,
        })?;
        for p in &pairs {
            let (register, _) = peer.channel.expect("QTRANSFER", |msg| match msg {
                Message::QTransfer { register, .. } => Some(register),
                _ => None,
            })?;
            if register != p.alice {
                return peer.channel.fail(ErrorCode::OutOfOrder, format!("unexpected register {register}"));
            }
        }
        let request: Vec<(u32, u32)> = pairs.iter().map(|p| (p.alice, p.bob)).collect();
        peer.channel.send(&Message::MeasureSwap { round, pairs: request })?;
        let (bits, _) = peer.channel.expect("SWAP_RESULTS", |msg| match msg {
            Message::SwapResults { bits } => Some(bits),
            _ => None,
        })?;
        if bits.len() != pairs.len() {
            return Err(NetError::protocol(
                ErrorCode::Malformed,
                format!("{} SWAP results for {} pairs", bits.len(), pairs.len()),
            ));
        }
        s += bits.iter().filter(|&&failed| !failed).count();
        m += pairs.len();
        rounds += 1;
    }
    let frame = estimate_frame(s, m);
    peer.channel.send(&frame)?;
    let status = if m == 0 { EstimateStatus::NoPairs } else { EstimateStatus::Ok };
    Ok(peer.into_report(estimate_from_counts(s, m), status, rounds, m, Some(s)))
}
