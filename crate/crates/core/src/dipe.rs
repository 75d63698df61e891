//! Inner product estimation with random subspace projections and SWAP tests.
//!
//! Each round draws a Haar unitary `U`, measures every copy with the block
//! POVM `{U Pi_i U^dagger}`, pairs Alice/Bob copies that landed in the same
//! block and SWAP-tests each pair. Pairs accumulate across rounds until the
//! target is met; the estimate is `2 s / m - 1`.
//!
//! Every random choice is drawn from a stream derived from the run's
//! [`StreamFactory`] by `(label, round, index)`, so the networked referee can
//! replay exactly the same draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{check_dim, haar_unitary, CVector, Projector, PureState, UnitaryMatrix};
use crate::rng::{label, StreamFactory};
use crate::sampling::swap_test;

#[derive(Debug, Clone)]
pub struct SubspacePartition {
    dim: usize,
    block: usize,
    unitary: UnitaryMatrix,
    blocks: Vec<Projector>,
}

impl SubspacePartition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn unitary(&self) -> &UnitaryMatrix {
        &self.unitary
    }

    pub fn blocks(&self) -> &[Projector] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_pairable(&self, index: usize) -> bool {
        index < self.blocks.len() && block_is_pairable(self.dim, self.block, index)
    }

    /// `<s|P_i|s>` for every block.
    pub fn weights(&self, state: &PureState) -> Result<Vec<f64>> {
        check_dim(self.dim, state.dim())?;
        Ok(self.blocks.iter().map(|p| p.coords(state.amplitudes()).norm_squared()).collect())
    }
}

/// Rank of block `index`: `block` except possibly for the last one.
pub fn block_rank(dim: usize, block: usize, index: usize) -> usize {
    dim.saturating_sub(index * block).min(block)
}

/// Blocks smaller than half the nominal size never take part in pairing.
pub fn block_is_pairable(dim: usize, block: usize, index: usize) -> bool {
    2 * block_rank(dim, block, index) >= block
}

/// Number of blocks, `ceil(dim / block)`.
pub fn num_blocks(dim: usize, block: usize) -> usize {
    dim.div_ceil(block)
}

pub fn make_partition<R: Rng + ?Sized>(dim: usize, block: usize, rng: &mut R) -> Result<SubspacePartition> {
    if block == 0 || block > dim {
        return Err(Error::InvalidBlock { dim, block });
    }
    let unitary = haar_unitary(dim, rng)?;
    partition_from_unitary(unitary, block)
}

/// Partition `{U Pi_i U^dagger}` for a given `U`.
pub fn partition_from_unitary(unitary: UnitaryMatrix, block: usize) -> Result<SubspacePartition> {
    let dim = unitary.dim();
    if block == 0 || block > dim {
        return Err(Error::InvalidBlock { dim, block });
    }
    let blocks = (0..num_blocks(dim, block))
        .map(|i| {
            let start = i * block;
            let end = (start + block).min(dim);
            Projector::from_basis(unitary.matrix().columns(start, end - start).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubspacePartition { dim, block, unitary, blocks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRecord {
    pub copy_index: usize,
    pub block_index: usize,
    pub post_state: PureState,
}

/// Born-sample a block index from `weights` with a single uniform draw.
pub fn sample_block<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

/// Normalized `P_i |s>`, or `None` when the block annihilates `s`.
fn project_onto(p: &Projector, s: &PureState) -> Option<PureState> {
    let v: CVector = p.apply(s.amplitudes());
    PureState::normalize(v).ok()
}

/// Measure one copy of `state` with the block POVM.
pub fn project_copy<R: Rng + ?Sized>(
    state: &PureState,
    partition: &SubspacePartition,
    rng: &mut R,
) -> Result<(usize, PureState)> {
    let weights = partition.weights(state)?;
    let i = sample_block(&weights, rng);
    let post = project_onto(&partition.blocks[i], state).ok_or(Error::ZeroVector)?;
    Ok((i, post))
}

/// Measure `count` independent copies, one after another on `rng`.
pub fn project_copies<R: Rng + ?Sized>(
    state: &PureState,
    count: usize,
    partition: &SubspacePartition,
    rng: &mut R,
) -> Result<Vec<ProjectionRecord>> {
    let weights = partition.weights(state)?;
    let mut posts: Vec<Option<PureState>> = vec![None; partition.num_blocks()];
    (0..count)
        .map(|copy_index| {
            let block_index = sample_block(&weights, rng);
            let post = match &posts[block_index] {
                Some(p) => p.clone(),
                None => {
                    let p = project_onto(&partition.blocks[block_index], state).ok_or(Error::ZeroVector)?;
                    posts[block_index] = Some(p.clone());
                    p
                }
            };
            Ok(ProjectionRecord { copy_index, block_index, post_state: post })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub alice: usize,
    pub bob: usize,
    pub block: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollisionPairing {
    pub pairs: Vec<Pair>,
}

impl CollisionPairing {
    pub fn m(&self) -> usize {
        self.pairs.len()
    }
}

/// Greedy first-fit pairing on block labels indexed by copy.
///
/// Alice copies are visited in ascending order; each takes the lowest unused
/// Bob copy with the same block. Blocks rejected by `eligible` are skipped.
pub fn greedy_pairing(
    alice_blocks: &[usize],
    bob_blocks: &[usize],
    max_pairs: usize,
    eligible: impl Fn(usize) -> bool,
) -> Vec<Pair> {
    let mut used = vec![false; bob_blocks.len()];
    let mut pairs = Vec::new();
    for (a, &block) in alice_blocks.iter().enumerate() {
        if pairs.len() >= max_pairs {
            break;
        }
        if !eligible(block) {
            continue;
        }
        if let Some(b) = (0..bob_blocks.len()).find(|&b| !used[b] && bob_blocks[b] == block) {
            used[b] = true;
            pairs.push(Pair { alice: a, bob: b, block });
        }
    }
    pairs
}

pub fn pair_collisions(alice: &[ProjectionRecord], bob: &[ProjectionRecord], max_pairs: usize) -> CollisionPairing {
    let mut alice: Vec<&ProjectionRecord> = alice.iter().collect();
    let mut bob: Vec<&ProjectionRecord> = bob.iter().collect();
    alice.sort_by_key(|r| r.copy_index);
    bob.sort_by_key(|r| r.copy_index);
    let ab: Vec<usize> = alice.iter().map(|r| r.block_index).collect();
    let bb: Vec<usize> = bob.iter().map(|r| r.block_index).collect();
    let pairs = greedy_pairing(&ab, &bb, max_pairs, |_| true)
        .into_iter()
        .map(|p| Pair { alice: alice[p.alice].copy_index, bob: bob[p.bob].copy_index, block: p.block })
        .collect();
    CollisionPairing { pairs }
}

/// `k^2 sum_i <psi|P_i|psi> <phi|P_i|phi>`.
pub fn expected_collisions(psi: &PureState, phi: &PureState, partition: &SubspacePartition, k: usize) -> Result<f64> {
    let wa = partition.weights(psi)?;
    let wb = partition.weights(phi)?;
    let kk = (k * k) as f64;
    Ok(kk * wa.iter().zip(&wb).map(|(a, b)| a * b).sum::<f64>())
}

/// Number of `(alice, bob)` copy pairs sharing a block.
pub fn raw_collisions(alice_blocks: &[usize], bob_blocks: &[usize], num_blocks: usize) -> usize {
    let mut na = vec![0usize; num_blocks];
    let mut nb = vec![0usize; num_blocks];
    alice_blocks.iter().for_each(|&b| na[b] += 1);
    bob_blocks.iter().for_each(|&b| nb[b] += 1);
    na.iter().zip(&nb).map(|(a, b)| a * b).sum()
}

/// Communication counters. Quantum messages are stored by dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLedger {
    pub alice_copies: u64,
    pub bob_copies: u64,
    pub quantum_messages: Vec<u32>,
    pub classical_bits: u64,
}

impl ResourceLedger {
    /// `sum ceil(log2 dim)` over quantum messages.
    pub fn qubit_equivalents(&self) -> f64 {
        self.quantum_messages.iter().map(|&d| qubits_for(d) as f64).sum()
    }

    pub fn copies_used(&self) -> u64 {
        self.alice_copies + self.bob_copies
    }

    pub fn record_round(&mut self, copies_per_side: usize, pairs: usize) {
        self.alice_copies += copies_per_side as u64;
        self.bob_copies += copies_per_side as u64;
        self.classical_bits += round_classical_bits(copies_per_side, pairs);
    }

    pub fn record_transfer(&mut self, dim: u32) {
        self.quantum_messages.push(dim);
    }
}

/// `ceil(log2 dim)`.
pub fn qubits_for(dim: u32) -> u32 {
    if dim <= 1 {
        0
    } else {
        32 - (dim - 1).leading_zeros()
    }
}

/// Bits of one round's outcome exchange (`count u32` + `u16` per copy, each
/// side) plus the pairing message (`count u32` + `u32, u32, u16` per pair).
pub fn round_classical_bits(copies_per_side: usize, pairs: usize) -> u64 {
    let outcomes = 2 * (4 + 2 * copies_per_side as u64);
    let pairing = 4 + 10 * pairs as u64;
    8 * (outcomes + pairing)
}

/// `2 s / m - 1`, NaN when no pair was tested.
pub fn estimate_from_counts(s: usize, m: usize) -> f64 {
    if m == 0 {
        f64::NAN
    } else {
        2.0 * s as f64 / m as f64 - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipeParams {
    /// `k = ceil(copies_constant * sqrt(d / q))`.
    pub copies_constant: f64,
    pub target_pairs: usize,
    pub max_rounds: usize,
}

impl Default for DipeParams {
    fn default() -> Self {
        Self { copies_constant: 4.0, target_pairs: 20, max_rounds: 10_000 }
    }
}

pub fn copies_per_round(dim: usize, block: usize, constant: f64) -> usize {
    ((constant * (dim as f64 / block as f64).sqrt()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub copies_per_side: usize,
    /// Copy pairs sharing a block, before any pairing cap.
    pub collisions: usize,
    pub expected_collisions: f64,
    pub pairs: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipeEstimate {
    /// NaN when `m == 0`.
    pub estimate: f64,
    pub m: usize,
    pub s: usize,
    pub ledger: ResourceLedger,
    pub rounds: Vec<RoundTrace>,
}

impl DipeEstimate {
    pub fn no_pairs(&self) -> bool {
        self.m == 0
    }
}

/// Stream conventions shared with the networked referee.
pub mod streams {
    use super::*;

    pub fn partition(root: &StreamFactory, round: usize) -> StreamFactory {
        root.path(&[label::PARTITION, round as u64])
    }

    pub fn alice_copy(root: &StreamFactory, round: usize, copy: usize) -> StreamFactory {
        root.path(&[label::ALICE, round as u64, copy as u64])
    }

    pub fn bob_copy(root: &StreamFactory, round: usize, copy: usize) -> StreamFactory {
        root.path(&[label::BOB, round as u64, copy as u64])
    }

    pub fn swap(root: &StreamFactory, round: usize, pair: usize) -> StreamFactory {
        root.path(&[label::SWAP, round as u64, pair as u64])
    }
}

/// One round's measurement outcomes and the pre-computed post states.
#[derive(Debug, Clone)]
pub struct RoundOutcomes {
    pub partition: SubspacePartition,
    pub alice_blocks: Vec<usize>,
    pub bob_blocks: Vec<usize>,
    alice_posts: Vec<Option<PureState>>,
    bob_posts: Vec<Option<PureState>>,
}

impl RoundOutcomes {
    pub fn alice_post(&self, block: usize) -> Option<&PureState> {
        self.alice_posts.get(block).and_then(Option::as_ref)
    }

    pub fn bob_post(&self, block: usize) -> Option<&PureState> {
        self.bob_posts.get(block).and_then(Option::as_ref)
    }
}

fn measure_side(
    state: &PureState,
    partition: &SubspacePartition,
    k: usize,
    stream: impl Fn(usize) -> StreamFactory,
) -> Result<(Vec<usize>, Vec<Option<PureState>>)> {
    let weights = partition.weights(state)?;
    let blocks: Vec<usize> = (0..k).map(|j| sample_block(&weights, &mut stream(j).rng())).collect();
    let mut posts = vec![None; partition.num_blocks()];
    for &b in &blocks {
        if posts[b].is_none() {
            posts[b] = Some(project_onto(&partition.blocks()[b], state).ok_or(Error::ZeroVector)?);
        }
    }
    Ok((blocks, posts))
}

/// Steps 1-2 of a round: partition and per-copy block measurements.
pub fn measure_round(
    psi: &PureState,
    phi: &PureState,
    block: usize,
    k: usize,
    root: &StreamFactory,
    round: usize,
) -> Result<RoundOutcomes> {
    check_dim(psi.dim(), phi.dim())?;
    let partition = make_partition(psi.dim(), block, &mut streams::partition(root, round).rng())?;
    let (alice_blocks, alice_posts) = measure_side(psi, &partition, k, |j| streams::alice_copy(root, round, j))?;
    let (bob_blocks, bob_posts) = measure_side(phi, &partition, k, |j| streams::bob_copy(root, round, j))?;
    Ok(RoundOutcomes { partition, alice_blocks, bob_blocks, alice_posts, bob_posts })
}

/// SWAP-test the `p`-th pair of a round on its own stream.
pub fn swap_pair(outcomes: &RoundOutcomes, pair: &Pair, root: &StreamFactory, round: usize, p: usize) -> Result<u8> {
    let a = outcomes.alice_post(pair.block).ok_or(Error::ZeroVector)?;
    let b = outcomes.bob_post(pair.block).ok_or(Error::ZeroVector)?;
    swap_test(a, b, &mut streams::swap(root, round, p).rng())
}

pub fn run_dipe(
    psi: &PureState,
    phi: &PureState,
    block: usize,
    params: &DipeParams,
    root: &StreamFactory,
) -> Result<DipeEstimate> {
    check_dim(psi.dim(), phi.dim())?;
    let d = psi.dim();
    if block == 0 || block > d {
        return Err(Error::InvalidBlock { dim: d, block });
    }
    let k = copies_per_round(d, block, params.copies_constant);
    let mut ledger = ResourceLedger::default();
    let mut rounds = Vec::new();
    let (mut m, mut s) = (0usize, 0usize);

    for round in 0..params.max_rounds {
        if m >= params.target_pairs {
            break;
        }
        let out = measure_round(psi, phi, block, k, root, round)?;
        let collisions = raw_collisions(&out.alice_blocks, &out.bob_blocks, out.partition.num_blocks());
        let expected = expected_collisions(psi, phi, &out.partition, k)?;
        let pairs = greedy_pairing(&out.alice_blocks, &out.bob_blocks, params.target_pairs - m, |b| {
            out.partition.is_pairable(b)
        });
        let mut successes = 0;
        for (p, pair) in pairs.iter().enumerate() {
            ledger.record_transfer(block as u32);
            if swap_pair(&out, pair, root, round, p)? == 0 {
                successes += 1;
            }
        }
        ledger.record_round(k, pairs.len());
        m += pairs.len();
        s += successes;
        rounds.push(RoundTrace {
            round,
            copies_per_side: k,
            collisions,
            expected_collisions: expected,
            pairs: pairs.len(),
            successes,
        });
    }

    Ok(DipeEstimate { estimate: estimate_from_counts(s, m), m, s, ledger, rounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonParams {
    /// `target_pairs = ceil(pairs_constant / eps^2)`.
    pub pairs_constant: f64,
    /// Required `block >= block_constant * log2(d) / eps^2`.
    pub block_constant: f64,
    pub copies_constant: f64,
    pub max_rounds: usize,
}

impl Default for EpsilonParams {
    fn default() -> Self {
        Self { pairs_constant: 2.0, block_constant: 1.0, copies_constant: 4.0, max_rounds: 10_000 }
    }
}

/// Smallest block accepted by [`run_dipe_eps`].
pub fn required_block(dim: usize, epsilon: f64, block_constant: f64) -> f64 {
    block_constant * (dim as f64).log2() / (epsilon * epsilon)
}

/// Accuracy-`epsilon` run: `ceil(c2 / eps^2)` pairs, refusing blocks below
/// `c3 log2(d) / eps^2`.
pub fn run_dipe_eps(
    psi: &PureState,
    phi: &PureState,
    block: usize,
    epsilon: f64,
    params: &EpsilonParams,
    root: &StreamFactory,
) -> Result<DipeEstimate> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let required = required_block(psi.dim(), epsilon, params.block_constant);
    if (block as f64) < required - 1e-9 {
        return Err(Error::BlockTooSmall { block, required });
    }
    let target_pairs = (params.pairs_constant / (epsilon * epsilon) - 1e-9).ceil().max(1.0) as usize;
    let dp = DipeParams { copies_constant: params.copies_constant, target_pairs, max_rounds: params.max_rounds };
    run_dipe(psi, phi, block, &dp, root)
}
