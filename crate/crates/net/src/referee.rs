//! The process that holds both parties' quantum registers.
//!
//! The referee is a single sequential state machine. At every step it knows
//! which link it expects the next frame on, so the frame sequence of each
//! link is a function of the run seed alone.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use dipe_core::dipe::{
    copies_per_round, estimate_from_counts, measure_round, run_dipe, streams, DipeEstimate, DipeParams, ResourceLedger,
    RoundTrace,
};
use dipe_core::oracles::planted_pair;
use dipe_core::rng::label;
use dipe_core::sampling::swap_test;
use dipe_core::{PureState, StreamFactory};

use crate::channel::{Channel, TranscriptEntry};
use crate::error::{NetError, Result};
use crate::wire::{ErrorCode, EstimateStatus, Message, Role, RoundAction, RunConfig, WirePair, PROTOCOL_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq)]
pub enum StateRecipe {
    /// Haar `psi` and `phi` with `|<psi|phi>|^2 = overlap_sq`, drawn from the
    /// run's STATES stream.
    Planted {
        overlap_sq: f64,
    },
    Explicit {
        psi: PureState,
        phi: PureState,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefereeConfig {
    pub d: usize,
    pub q: usize,
    pub copies_constant: f64,
    pub target_pairs: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub states: StateRecipe,
    pub timeout: Duration,
}

impl RefereeConfig {
    pub fn new(d: usize, q: usize, seed: u64) -> Self {
        let p = DipeParams::default();
        Self {
            d,
            q,
            copies_constant: p.copies_constant,
            target_pairs: p.target_pairs,
            max_rounds: p.max_rounds,
            seed,
            states: StateRecipe::Planted { overlap_sq: 0.5 },
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn k(&self) -> usize {
        copies_per_round(self.d, self.q, self.copies_constant)
    }

    pub fn dipe_params(&self) -> DipeParams {
        DipeParams {
            copies_constant: self.copies_constant,
            target_pairs: self.target_pairs,
            max_rounds: self.max_rounds,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            d: self.d as u32,
            q: self.q as u32,
            k: self.k() as u32,
            target_pairs: self.target_pairs as u32,
            max_rounds: self.max_rounds as u32,
        }
    }

    fn root(&self) -> StreamFactory {
        StreamFactory::new(self.seed)
    }

    /// Stream root for partitions, copies and SWAP tests.
    pub fn protocol_root(&self) -> StreamFactory {
        self.root().child(label::PROTOCOL)
    }

    pub fn states(&self) -> Result<(PureState, PureState)> {
        match &self.states {
            StateRecipe::Planted { overlap_sq } => {
                Ok(planted_pair(self.d, *overlap_sq, &mut self.root().child(label::STATES).rng())?)
            }
            StateRecipe::Explicit { psi, phi } => Ok((psi.clone(), phi.clone())),
        }
    }
}

/// The in-process run that a networked run with the same config must match.
pub fn in_process_estimate(cfg: &RefereeConfig) -> Result<DipeEstimate> {
    let (psi, phi) = cfg.states()?;
    Ok(run_dipe(&psi, &phi, cfg.q, &cfg.dipe_params(), &cfg.protocol_root())?)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Value in Bob's ESTIMATE frame.
    pub estimate: f64,
    pub status: EstimateStatus,
    pub m: usize,
    pub s: usize,
    pub ledger: ResourceLedger,
    pub rounds: Vec<RoundTrace>,
    /// Both links, Alice's frames first.
    pub transcript: Vec<TranscriptEntry>,
}

fn accept_before(listener: &TcpListener, deadline: Instant) -> Result<TcpStream> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(NetError::Timeout("client connection".into()));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn handshake(ch: &mut Channel) -> Result<Role> {
    let ((role, version), _) = ch.expect("HELLO", |m| match m {
        Message::Hello { role, version, .. } => Some((role, version)),
        _ => None,
    })?;
    if version != PROTOCOL_VERSION {
        return ch.fail(
            ErrorCode::VersionMismatch,
            format!("protocol version {version} not supported (expected {PROTOCOL_VERSION})"),
        );
    }
    if role == Role::Referee {
        return ch.fail(ErrorCode::Malformed, "client claimed the referee role");
    }
    Ok(role)
}

pub fn bind(addr: &str) -> Result<(TcpListener, SocketAddr)> {
    let l = TcpListener::bind(addr)?;
    let a = l.local_addr()?;
    Ok((l, a))
}

/// Serve one run on `listener`: accept Alice and Bob, drive the rounds, relay
/// the final estimate and return the summary.
pub fn referee_serve(cfg: &RefereeConfig, listener: &TcpListener) -> Result<RunSummary> {
    let clock = Instant::now();
    let deadline = clock + cfg.timeout;
    let mut alice: Option<Channel> = None;
    let mut bob: Option<Channel> = None;
    while alice.is_none() || bob.is_none() {
        let stream = accept_before(listener, deadline)?;
        let mut ch = Channel::new(stream, "pending", clock, cfg.timeout)?;
        let role = handshake(&mut ch)?;
        let slot = match role {
            Role::Alice => &mut alice,
            _ => &mut bob,
        };
        if slot.is_some() {
            return ch.fail(ErrorCode::Malformed, format!("second {role:?} connection"));
        }
        ch.set_link(if role == Role::Alice { "alice" } else { "bob" });
        *slot = Some(ch);
    }
    let (mut alice, mut bob) = (alice.expect("connected"), bob.expect("connected"));
    for ch in [&mut alice, &mut bob] {
        ch.send(&Message::Hello { role: Role::Referee, version: PROTOCOL_VERSION, seed: cfg.seed })?;
        ch.send(&Message::Config(cfg.run_config()))?;
    }

    let mut run = Run::new(cfg)?;
    let outcome = run.drive(&mut alice, &mut bob);
    let mut transcript = alice.into_transcript();
    transcript.extend(bob.into_transcript());
    let (estimate, status) = outcome?;
    Ok(RunSummary { estimate, status, m: run.m, s: run.s, ledger: run.ledger, rounds: run.rounds, transcript })
}

struct Run<'a> {
    cfg: &'a RefereeConfig,
    psi: PureState,
    phi: PureState,
    root: StreamFactory,
    k: usize,
    m: usize,
    s: usize,
    ledger: ResourceLedger,
    rounds: Vec<RoundTrace>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RefereeConfig) -> Result<Self> {
        let (psi, phi) = cfg.states()?;
        Ok(Self {
            cfg,
            psi,
            phi,
            root: cfg.protocol_root(),
            k: cfg.k(),
            m: 0,
            s: 0,
            ledger: ResourceLedger::default(),
            rounds: Vec::new(),
        })
    }

    fn drive(&mut self, alice: &mut Channel, bob: &mut Channel) -> Result<(f64, EstimateStatus)> {
        let mut round = 0usize;
        loop {
            let done = self.m >= self.cfg.target_pairs || round >= self.cfg.max_rounds;
            let action = if done { RoundAction::Finish } else { RoundAction::Begin };
            for ch in [&mut *alice, &mut *bob] {
                ch.send(&Message::Round { round: round as u32, action })?;
            }
            if done {
                break;
            }
            self.round(round, alice, bob)?;
            round += 1;
        }

        let ((value, status), _) = bob.expect("ESTIMATE", |m| match m {
            Message::Estimate { value, status } => Some((value, status)),
            _ => None,
        })?;
        alice.send(&Message::Estimate { value, status })?;
        Ok((value, status))
    }

    fn serve_measurements(&self, ch: &mut Channel, round: usize, blocks: &[usize]) -> Result<()> {
        let mut measured = vec![false; self.k];
        for _ in 0..self.k {
            let ((r, copy), _) = ch.expect("MEASURE_REQ", |m| match m {
                Message::MeasureCopy { round, copy } => Some((round, copy)),
                _ => None,
            })?;
            let copy = copy as usize;
            if r as usize != round || copy >= self.k || measured[copy] {
                return ch.fail(ErrorCode::OutOfOrder, format!("measurement of copy {copy} in round {r}"));
            }
            measured[copy] = true;
            ch.send(&Message::MeasureResp { round: r, copy: copy as u32, block: blocks[copy] as u16 })?;
        }
        Ok(())
    }

    fn read_outcomes(&mut self, ch: &mut Channel, blocks: &[usize]) -> Result<Message> {
        let (reported, frame) = ch.expect("SUBSPACE_OUTCOMES", |m| match m {
            Message::SubspaceOutcomes { blocks } => Some(blocks),
            _ => None,
        })?;
        if !reported.iter().map(|&b| b as usize).eq(blocks.iter().copied()) {
            return ch.fail(ErrorCode::Malformed, "reported outcomes differ from recorded measurements");
        }
        self.ledger.classical_bits += 8 * frame.payload_length as u64;
        Ok(frame.message)
    }

    fn round(&mut self, round: usize, alice: &mut Channel, bob: &mut Channel) -> Result<()> {
        let (k, q) = (self.k, self.cfg.q);
        let out = measure_round(&self.psi, &self.phi, q, k, &self.root, round)?;
        self.serve_measurements(alice, round, &out.alice_blocks)?;
        self.serve_measurements(bob, round, &out.bob_blocks)?;
        self.ledger.alice_copies += k as u64;
        self.ledger.bob_copies += k as u64;

        let from_alice = self.read_outcomes(alice, &out.alice_blocks)?;
        let from_bob = self.read_outcomes(bob, &out.bob_blocks)?;
        bob.send(&from_alice)?;
        alice.send(&from_bob)?;

        let (pairs, frame) = alice.expect("PAIRING", |m| match m {
            Message::Pairing { pairs } => Some(pairs),
            _ => None,
        })?;
        if let Err(detail) = self.check_pairing(&pairs, &out.alice_blocks, &out.bob_blocks) {
            return alice.fail(ErrorCode::InvalidPairing, detail);
        }
        self.ledger.classical_bits += 8 * frame.payload_length as u64;
        bob.send(&frame.message)?;

        // register ownership: true once Alice's copy has been handed to Bob
        let mut held_by_bob = vec![false; k];
        for p in &pairs {
            let ((register, dimension), frame) = alice.expect("QTRANSFER", |m| match m {
                Message::QTransfer { register, dimension } => Some((register, dimension)),
                _ => None,
            })?;
            if register != p.alice || dimension as usize != q {
                return alice.fail(ErrorCode::OutOfOrder, format!("transfer of register {register}"));
            }
            held_by_bob[register as usize] = true;
            self.ledger.record_transfer(dimension);
            bob.send(&frame.message)?;
        }

        let ((r, requested), _) = bob.expect("MEASURE_REQ", |m| match m {
            Message::MeasureSwap { round, pairs } => Some((round, pairs)),
            _ => None,
        })?;
        if r as usize != round {
            return bob.fail(ErrorCode::OutOfOrder, format!("SWAP request for round {r}"));
        }
        let mut used_a = vec![false; k];
        let mut used_b = vec![false; k];
        let mut bits = Vec::with_capacity(requested.len());
        for (p, &(a, b)) in requested.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            if a >= k || b >= k || !held_by_bob[a] || used_a[a] || used_b[b] {
                return bob.fail(
                    ErrorCode::OwnershipViolation,
                    format!("SWAP on registers (alice {a}, bob {b}) not both held by Bob"),
                );
            }
            used_a[a] = true;
            used_b[b] = true;
            let left = out.alice_post(out.alice_blocks[a]).expect("measured block has a post state");
            let right = out.bob_post(out.bob_blocks[b]).expect("measured block has a post state");
            bits.push(swap_test(left, right, &mut streams::swap(&self.root, round, p).rng())? == 1);
        }
        let successes = bits.iter().filter(|&&b| !b).count();
        bob.send(&Message::SwapResults { bits })?;

        self.m += requested.len();
        self.s += successes;
        self.rounds.push(RoundTrace {
            round,
            copies_per_side: k,
            collisions: dipe_core::dipe::raw_collisions(&out.alice_blocks, &out.bob_blocks, out.partition.num_blocks()),
            expected_collisions: dipe_core::dipe::expected_collisions(&self.psi, &self.phi, &out.partition, k)?,
            pairs: requested.len(),
            successes,
        });
        Ok(())
    }

    fn check_pairing(
        &self,
        pairs: &[WirePair],
        alice_blocks: &[usize],
        bob_blocks: &[usize],
    ) -> std::result::Result<(), String> {
        let k = self.k;
        if self.m + pairs.len() > self.cfg.target_pairs {
            return Err(format!("{} pairs exceed the remaining target", pairs.len()));
        }
        let mut used_a = vec![false; k];
        let mut used_b = vec![false; k];
        for p in pairs {
            let (a, b) = (p.alice as usize, p.bob as usize);
            if a >= k || b >= k || used_a[a] || used_b[b] {
                return Err(format!("pair ({a}, {b}) reuses or invents a copy"));
            }
            if alice_blocks[a] != p.block as usize || bob_blocks[b] != p.block as usize {
                return Err(format!("pair ({a}, {b}) does not share block {}", p.block));
            }
            used_a[a] = true;
            used_b[b] = true;
        }
        Ok(())
    }
}

/// `2 s / m - 1` with the no-pairs sentinel.
pub fn estimate_frame(s: usize, m: usize) -> Message {
    let status = if m == 0 { EstimateStatus::NoPairs } else { EstimateStatus::Ok };
    Message::Estimate { value: estimate_from_counts(s, m), status }
}
