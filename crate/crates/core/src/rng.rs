//! Counter-based random stream derivation.
//!
//! A [`StreamFactory`] is a 256-bit key. Child keys are obtained by hashing the
//! parent key together with a label, so the stream used by any trial, round or
//! copy is a pure function of `(seed, path)` and never of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Well-known labels used when deriving protocol streams.
pub mod label {
    pub const PARTITION: u64 = 0x5041_5254;
    pub const ALICE: u64 = 0x414c_4943;
    pub const BOB: u64 = 0x0042_4f42;
    pub const SWAP: u64 = 0x5357_4150;
    pub const STATES: u64 = 0x5354_4154;
    pub const PROTOCOL: u64 = 0x5052_4f54;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const GRID: u64 = 0x4752_4944;
    pub const INSTANCE: u64 = 0x494e_5354;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"dipe-stream/v1");
        h.update(seed.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    pub fn child(&self, label: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(label.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    /// Derive along a path of labels, `self.child(p[0]).child(p[1])...`.
    pub fn path(&self, labels: &[u64]) -> Self {
        labels.iter().fold(*self, |f, &l| f.child(l))
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::from_seed(self.key)
    }

    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }
}
