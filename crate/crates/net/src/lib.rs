//! Networked execution of the subspace-projection overlap protocol.
//!
//! Alice and Bob run as separate clients that only ever see block indices,
//! pairings and SWAP outcome bits. A referee process owns both parties'
//! registers: it answers measurement requests, moves register ownership on
//! transfer and performs SWAP tests on registers held by Bob. Classical
//! messages between Alice and Bob are relayed by the referee so every link
//! has a deterministic frame sequence.

pub mod channel;
pub mod client;
pub mod error;
pub mod referee;
pub mod wire;

pub use channel::{Channel, Direction, TranscriptEntry};
pub use client::{alice_run, bob_run, ClientReport, Peer};
pub use error::{NetError, Result};
pub use referee::{in_process_estimate, referee_serve, RefereeConfig, RunSummary, StateRecipe};
