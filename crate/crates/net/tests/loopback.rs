use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use dipe_core::dipe::round_classical_bits;
use dipe_net::channel::{to_json_lines, Direction};
use dipe_net::referee::bind;
use dipe_net::wire::{tag, tag_name, ErrorCode, EstimateStatus, Message, Role};
use dipe_net::{
    alice_run, bob_run, in_process_estimate, referee_serve, ClientReport, NetError, Peer, RefereeConfig, RunSummary,
};

const TIMEOUT: Duration = Duration::from_secs(10);

struct Session {
    summary: Result<RunSummary, NetError>,
    alice: Result<ClientReport, NetError>,
    bob: Result<ClientReport, NetError>,
}

fn serve(cfg: &RefereeConfig) -> Session {
    let (listener, addr) = bind("127.0.0.1:0").unwrap();
    let addr = addr.to_string();
    let cfg = cfg.clone();
    let referee = thread::spawn(move || referee_serve(&cfg, &listener));
    let a = addr.clone();
    let alice = thread::spawn(move || alice_run(&a, TIMEOUT));
    let bob = bob_run(&addr, TIMEOUT);
    Session { summary: referee.join().unwrap(), alice: alice.join().unwrap(), bob }
}

#[test]
fn networked_estimate_matches_in_process_bits() {
    for seed in [0u64, 1, 42] {
        let cfg = RefereeConfig::new(64, 16, seed);
        let session = serve(&cfg);
        let summary = session.summary.unwrap();
        let local = in_process_estimate(&cfg).unwrap();
        assert_eq!(summary.estimate.to_bits(), local.estimate.to_bits(), "seed {seed}");
        assert_eq!((summary.m, summary.s), (local.m, local.s));
        assert_eq!(summary.rounds, local.rounds);
        assert_eq!(summary.ledger, local.ledger);
        let alice = session.alice.unwrap();
        let bob = session.bob.unwrap();
        assert_eq!(alice.estimate.to_bits(), local.estimate.to_bits());
        assert_eq!(bob.estimate.to_bits(), local.estimate.to_bits());
        assert_eq!(bob.successes, Some(local.s));
        assert_eq!(alice.seed, seed);
    }
}

#[test]
fn classical_bits_equal_outcome_and_pairing_payloads() {
    let cfg = RefereeConfig::new(64, 16, 7);
    let summary = serve(&cfg).summary.unwrap();
    // payload bytes = frame bytes minus 5 (length prefix and tag), on the inbound side only
    let wire_bytes: usize = summary
        .transcript
        .iter()
        .filter(|e| e.direction == Direction::In)
        .filter(|e| e.type_tag == tag::SUBSPACE_OUTCOMES || e.type_tag == tag::PAIRING)
        .map(|e| e.byte_length - 5)
        .sum();
    assert_eq!(summary.ledger.classical_bits, 8 * wire_bytes as u64);
    let formula: u64 = summary.rounds.iter().map(|r| round_classical_bits(r.copies_per_side, r.pairs)).sum();
    assert_eq!(summary.ledger.classical_bits, formula);
}

#[test]
fn transcripts_are_reproducible() {
    let cfg = RefereeConfig::new(32, 8, 5);
    let a = serve(&cfg).summary.unwrap();
    let b = serve(&cfg).summary.unwrap();
    let keys = |s: &RunSummary| s.transcript.iter().map(|e| e.key()).collect::<Vec<_>>();
    assert_eq!(keys(&a), keys(&b));
}

#[test]
fn exhausted_rounds_send_the_nan_sentinel() {
    let mut cfg = RefereeConfig::new(16, 4, 3);
    cfg.max_rounds = 0;
    let session = serve(&cfg);
    let summary = session.summary.unwrap();
    assert_eq!(summary.status, EstimateStatus::NoPairs);
    assert!(summary.estimate.is_nan());
    let alice = session.alice.unwrap();
    assert_eq!(alice.status, EstimateStatus::NoPairs);
    assert!(alice.estimate.is_nan());
}

#[test]
fn wrong_version_is_rejected_with_an_error_frame() {
    let (listener, addr) = bind("127.0.0.1:0").unwrap();
    let cfg = RefereeConfig::new(16, 4, 1);
    let referee = thread::spawn(move || referee_serve(&cfg, &listener));
    let client = Peer::connect_with_version(&addr.to_string(), Role::Alice, 99, TIMEOUT);
    match client {
        Err(NetError::Remote { code, .. }) => assert_eq!(code, ErrorCode::VersionMismatch),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("handshake accepted"),
    }
    let served = referee.join().unwrap();
    assert_eq!(served.unwrap_err().code(), Some(ErrorCode::VersionMismatch));
}

/// Bob that asks for a SWAP on an Alice register that was never transferred.
fn rogue_bob(addr: &str) -> Result<(), NetError> {
    let mut peer = Peer::connect(addr, Role::Bob, TIMEOUT)?;
    let round = peer.next_round()?.expect("first round");
    let mine = peer.measure_copies(round)?;
    peer.exchange_outcomes(&mine)?;
    let (pairs, _) = peer.channel.expect("PAIRING", |m| match m {
        Message::Pairing { pairs } => Some(pairs),
        _ => None,
    })?;
    for _ in &pairs {
        peer.channel.recv()?;
    }
    let held: Vec<u32> = pairs.iter().map(|p| p.alice).collect();
    let stolen = (0..peer.config.k).find(|a| !held.contains(a)).expect("an untransferred register");
    peer.channel.send(&Message::MeasureSwap { round, pairs: vec![(stolen, 0)] })?;
    peer.channel.recv().map(|_| ())
}

#[test]
fn swap_on_registers_not_held_by_bob_is_refused() {
    let (listener, addr) = bind("127.0.0.1:0").unwrap();
    let addr = addr.to_string();
    let cfg = RefereeConfig::new(64, 16, 11);
    let referee = thread::spawn(move || referee_serve(&cfg, &listener));
    let a = addr.clone();
    let alice = thread::spawn(move || alice_run(&a, Duration::from_secs(2)));
    let bob = rogue_bob(&addr);
    match bob {
        Err(NetError::Remote { code, .. }) => assert_eq!(code, ErrorCode::OwnershipViolation),
        other => panic!("unexpected outcome {other:?}"),
    }
    assert_eq!(referee.join().unwrap().unwrap_err().code(), Some(ErrorCode::OwnershipViolation));
    assert!(alice.join().unwrap().is_err());
}

#[test]
fn silent_peer_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let hold = thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        thread::sleep(Duration::from_millis(600));
        drop(s);
    });
    let got = Peer::connect(&addr, Role::Alice, Duration::from_millis(200));
    assert!(matches!(got, Err(NetError::Timeout(_))), "{:?}", got.err());
    hold.join().unwrap();
}

/// One-line-per-frame rendering of a transcript without timestamps.
fn render(summary: &RunSummary) -> String {
    summary
        .transcript
        .iter()
        .map(|e| {
            let dir = match e.direction {
                Direction::In => "in ",
                Direction::Out => "out",
            };
            format!("{} {} {} {}\n", e.link, dir, tag_name(e.type_tag), e.byte_length)
        })
        .collect()
}

fn one_round_config() -> RefereeConfig {
    let mut cfg = RefereeConfig::new(64, 16, 0);
    cfg.target_pairs = 1;
    cfg
}

#[test]
fn golden_transcript_for_seed_zero() {
    let summary = serve(&one_round_config()).summary.unwrap();
    assert_eq!(summary.rounds.len(), 1);
    let golden = include_str!("golden/seed0_one_round.txt");
    assert_eq!(render(&summary), golden);
    // every line is valid JSON in the persisted form
    for line in to_json_lines(&summary.transcript).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("monotonic_time").is_some());
    }
}
