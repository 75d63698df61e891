//! Outcome-level measurement samplers.
//!
//! None of these build circuits: each draws directly from the outcome
//! distribution of the corresponding measurement.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::qmath::{
    self, bilinear, check_dim, gaussian_vector, overlap, CVector, HermitianObservable, Projector, PureState, C64,
    ZERO_TOL,
};

const SUBSPACE_TOL: f64 = 1e-9;

/// `P(0) = (1 + |<a|b>|^2) / 2`.
pub fn swap_accept_probability(a: &PureState, b: &PureState) -> Result<f64> {
    let o = overlap(a, b)?;
    Ok(((1.0 + o.norm_sqr()) / 2.0).clamp(0.0, 1.0))
}

/// SWAP test on `a (x) b`; returns the ancilla bit (0 = success).
pub fn swap_test<R: Rng + ?Sized>(a: &PureState, b: &PureState, rng: &mut R) -> Result<u8> {
    let p0 = swap_accept_probability(a, b)?;
    Ok(bit_with_zero_probability(p0, rng))
}

/// Overlap test through a block encoding of `M`: outcome 0 with probability
/// `(1 + |<a|M|b>|^2) / 2`.
pub fn m_swap_test<R: Rng + ?Sized>(a: &PureState, m: &HermitianObservable, b: &PureState, rng: &mut R) -> Result<u8> {
    let norm = m.operator_norm();
    if norm > 1.0 + 1e-9 {
        return Err(Error::OperatorNormTooLarge { norm });
    }
    let v = bilinear(a, m, b)?;
    let p0 = ((1.0 + v.norm_sqr()) / 2.0).clamp(0.0, 1.0);
    Ok(bit_with_zero_probability(p0, rng))
}

fn bit_with_zero_probability<R: Rng + ?Sized>(p0: f64, rng: &mut R) -> u8 {
    if rng.random::<f64>() < p0 {
        0
    } else {
        1
    }
}

/// Outcome of the standard POVM on `Sym^k(W)` applied to `c^(x)k`, split as
/// `outcome = sqrt(alpha_sq) e^{i phase} c + sqrt(1 - alpha_sq) complement`.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmSample {
    pub outcome_state: PureState,
    pub alpha_sq: f64,
    pub phase: f64,
    /// `None` when `W` is one-dimensional.
    pub complement_state: Option<PureState>,
}

impl PovmSample {
    /// Distance between `outcome_state` and its reassembled decomposition.
    pub fn reconstruction_error(&self, conditioning: &PureState) -> f64 {
        let rebuilt = self.recompose(conditioning.amplitudes(), self.complement_state.as_ref().map(|c| c.amplitudes()));
        (rebuilt - self.outcome_state.amplitudes()).norm()
    }

    fn recompose(&self, cond: &CVector, comp: Option<&CVector>) -> CVector {
        recompose(self.alpha_sq, self.phase, cond, comp)
    }
}

fn recompose(alpha_sq: f64, phase: f64, cond: &CVector, comp: Option<&CVector>) -> CVector {
    let head = cond * C64::from_polar(alpha_sq.sqrt(), phase);
    match comp {
        Some(c) => head + c * C64::new((1.0 - alpha_sq).max(0.0).sqrt(), 0.0),
        None => head,
    }
}

/// POVM sample expressed in the coordinates of the subspace itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordSample {
    pub alpha_sq: f64,
    pub phase: f64,
    pub complement: Option<CVector>,
    pub outcome: CVector,
}

/// Haar-random unit vector in `C^n` orthogonal to the unit vector `cond`.
///
/// Needs `n >= 2`.
pub fn haar_complement<R: Rng + ?Sized>(cond: &CVector, rng: &mut R) -> CVector {
    debug_assert!(cond.len() >= 2);
    loop {
        let mut g = gaussian_vector(cond.len(), rng);
        let along = cond.dotc(&g);
        g -= cond * along;
        // one more pass keeps the residual overlap at rounding level
        let along = cond.dotc(&g);
        g -= cond * along;
        let n = g.norm();
        if n >= ZERO_TOL {
            return g.unscale(n);
        }
    }
}

/// Standard-POVM outcome for `copies` copies of the unit vector `cond` in
/// `C^n`, sampled through its posterior decomposition:
/// `alpha_sq ~ Beta(copies + 1, n - 1)`, uniform phase and a Haar complement.
///
/// Draw order is fixed (alpha, phase, complement) so results depend only on
/// the stream and `n`, never on an ambient embedding.
pub fn sample_povm_coords<R: Rng + ?Sized>(cond: &CVector, copies: usize, rng: &mut R) -> CoordSample {
    let n = cond.len();
    if n == 1 {
        return CoordSample { alpha_sq: 1.0, phase: 0.0, complement: None, outcome: cond.clone() };
    }
    let beta = Beta::new(copies as f64 + 1.0, (n - 1) as f64).expect("valid beta parameters");
    let alpha_sq: f64 = beta.sample(rng);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let comp = haar_complement(cond, rng);
    let mut outcome = recompose(alpha_sq, phase, cond, Some(&comp));
    let norm = outcome.norm();
    outcome.unscale_mut(norm);
    CoordSample { alpha_sq, phase, complement: Some(comp), outcome }
}

/// Standard POVM on `Sym^copies(W)` for `W = image(subspace)`, applied to
/// `conditioning^(x)copies`.
pub fn standard_povm_sample<R: Rng + ?Sized>(
    conditioning: &PureState,
    subspace: &Projector,
    copies: usize,
    rng: &mut R,
) -> Result<PovmSample> {
    check_dim(subspace.dim(), conditioning.dim())?;
    if subspace.rank() == 0 {
        return Err(Error::EmptySubspace);
    }
    let residual = subspace.residual(conditioning)?;
    if residual > SUBSPACE_TOL {
        return Err(Error::OutsideSubspace { residual });
    }
    let cond = subspace.coords(conditioning.amplitudes());
    let cond = cond.unscale(cond.norm());
    let s = sample_povm_coords(&cond, copies, rng);
    let basis = subspace.basis();
    Ok(PovmSample {
        outcome_state: PureState::normalize(basis * &s.outcome)?,
        alpha_sq: s.alpha_sq,
        phase: s.phase,
        complement_state: s.complement.map(|c| PureState::normalize(basis * c)).transpose()?,
    })
}

/// Closed-form posterior moments of `alpha_sq ~ Beta(copies + 1, d_w - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMoments {
    pub alpha_sq: f64,
    pub alpha_4: f64,
    pub one_minus_sq: f64,
}

pub fn posterior_moments(d_w: usize, copies: usize) -> PosteriorMoments {
    let d = d_w as f64;
    let s = copies as f64;
    PosteriorMoments {
        alpha_sq: (s + 1.0) / (d + s),
        alpha_4: (s + 2.0) * (s + 1.0) / ((d + s + 1.0) * (d + s)),
        one_minus_sq: d * (d - 1.0) / ((d + s + 1.0) * (d + s)),
    }
}

/// Result of [`haar_norm_concentration_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationCheck {
    pub failure_rate: f64,
    pub bound: f64,
}

/// Empirical rate of `||P U v|| not in (1 +- delta) sqrt(block/dim)` for Haar
/// `U`, fixed `v = |0>` and `P` the projector onto the first `block`
/// coordinates, alongside the tail bound `4 exp(-delta^2 block / 16)`.
pub fn haar_norm_concentration_check<R: Rng + ?Sized>(
    dim: usize,
    block: usize,
    trials: usize,
    delta: f64,
    rng: &mut R,
) -> Result<ConcentrationCheck> {
    if block == 0 || block > dim {
        return Err(Error::InvalidBlock { dim, block });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let target = (block as f64 / dim as f64).sqrt();
    let (lo, hi) = ((1.0 - delta) * target, (1.0 + delta) * target);
    let mut failures = 0usize;
    for _ in 0..trials {
        let u = qmath::haar_unitary(dim, rng)?;
        let norm = u.matrix().column(0).rows(0, block).norm();
        if !(norm > lo && norm < hi) {
            failures += 1;
        }
    }
    let failure_rate = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
    Ok(ConcentrationCheck { failure_rate, bound: 4.0 * (-delta * delta * block as f64 / 16.0).exp() })
}
