//! LOCC estimator for `|<phi|M_eps|psi>|^2`.
//!
//! Each party measures its `k` copies with `{P_eps, I - P_eps}`. With `s_a`
//! (`s_b`) copies surviving, it applies the standard POVM on
//! `Sym^{s_a}(supp M_eps)` and reports the outcome `u` (`v`). The estimator is
//! `w = (d_eps + s_a)(d_eps + s_b) / k^2 |<u|M_eps|v>|^2 - Tr[M_eps^2] / k^2`,
//! or `0` if either count is zero.
//!
//! All sampling happens in the `d_eps`-dimensional support coordinates.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::qmath::{CVector, PureState};
use crate::sampling::sample_povm_coords;
use crate::spectral::SpectralTruncation;

#[derive(Debug, Clone, PartialEq)]
pub struct GdipeOutcome {
    pub s_a: usize,
    pub s_b: usize,
    pub u: Option<PureState>,
    pub v: Option<PureState>,
    pub w: f64,
    pub psi_eps: Option<PureState>,
    pub phi_eps: Option<PureState>,
}

/// How the surviving-copy counts are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CountMode {
    /// One binomial draw per side.
    #[default]
    Binomial,
    /// `k` Bernoulli draws per side, one per copy.
    Sequential,
}

/// Per-instance quantities shared by every run on the same `(M_eps, psi, phi)`.
#[derive(Debug, Clone)]
pub struct GdipeInstance<'a> {
    trunc: &'a SpectralTruncation,
    /// Normalized support coordinates of `psi_eps`, if `P_eps psi != 0`.
    a: Option<CVector>,
    b: Option<CVector>,
    p_a: f64,
    p_b: f64,
}

/// Summary of one sampled run in support coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordRun {
    pub s_a: usize,
    pub s_b: usize,
    pub u: Option<CVector>,
    pub v: Option<CVector>,
    pub w: f64,
}

fn normalized_coords(trunc: &SpectralTruncation, s: &PureState) -> Result<(Option<CVector>, f64)> {
    let c = trunc.support_coords(s)?;
    let p = c.norm_squared();
    if p < 1e-24 {
        return Ok((None, 0.0));
    }
    let n = p.sqrt();
    Ok((Some(c.unscale(n)), p.min(1.0)))
}

impl<'a> GdipeInstance<'a> {
    pub fn new(trunc: &'a SpectralTruncation, psi: &PureState, phi: &PureState) -> Result<Self> {
        let (a, p_a) = normalized_coords(trunc, psi)?;
        let (b, p_b) = normalized_coords(trunc, phi)?;
        Ok(Self { trunc, a, b, p_a, p_b })
    }

    pub fn d_eps(&self) -> usize {
        self.trunc.d_eps()
    }

    /// `<psi|P_eps|psi>`.
    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn p_b(&self) -> f64 {
        self.p_b
    }

    /// `|<psi_eps|M_eps|phi_eps>|^2` for the normalized projections.
    pub fn f_normalized(&self) -> f64 {
        match (&self.a, &self.b) {
            (Some(a), Some(b)) => self.form(a, b).norm_sqr(),
            _ => 0.0,
        }
    }

    /// `Tr[M_eps^2 psi_eps]`.
    pub fn trace_m2_psi(&self) -> f64 {
        self.a.as_ref().map_or(0.0, |a| (self.trunc.support_matrix() * a).norm_squared())
    }

    /// `Tr[M_eps^2 phi_eps]`.
    pub fn trace_m2_phi(&self) -> f64 {
        self.b.as_ref().map_or(0.0, |b| (self.trunc.support_matrix() * b).norm_squared())
    }

    pub fn psi_coords(&self) -> Option<&CVector> {
        self.a.as_ref()
    }

    pub fn phi_coords(&self) -> Option<&CVector> {
        self.b.as_ref()
    }

    fn form(&self, u: &CVector, v: &CVector) -> nalgebra::Complex<f64> {
        u.dotc(&(self.trunc.support_matrix() * v))
    }

    fn w_for(&self, k: usize, s_a: usize, s_b: usize, u: &CVector, v: &CVector) -> f64 {
        let d = self.d_eps() as f64;
        let kk = (k * k) as f64;
        (d + s_a as f64) * (d + s_b as f64) / kk * self.form(u, v).norm_sqr() - self.trunc.hs_norm_sq() / kk
    }

    fn draw_counts<R: Rng + ?Sized>(&self, k: usize, mode: CountMode, rng: &mut R) -> (usize, usize) {
        match mode {
            CountMode::Binomial => {
                let s_a = Binomial::new(k as u64, self.p_a).expect("probability in [0, 1]").sample(rng);
                let s_b = Binomial::new(k as u64, self.p_b).expect("probability in [0, 1]").sample(rng);
                (s_a as usize, s_b as usize)
            }
            CountMode::Sequential => {
                let s_a = (0..k).filter(|_| rng.random::<f64>() < self.p_a).count();
                let s_b = (0..k).filter(|_| rng.random::<f64>() < self.p_b).count();
                (s_a, s_b)
            }
        }
    }

    /// Full run: draw counts, then the two POVM outcomes.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, mode: CountMode, rng: &mut R) -> CoordRun {
        let (s_a, s_b) = if self.d_eps() == 0 { (0, 0) } else { self.draw_counts(k, mode, rng) };
        self.sample_given(k, s_a, s_b, rng)
    }

    /// Run with the counts fixed; `w = 0` unless both are positive.
    pub fn sample_given<R: Rng + ?Sized>(&self, k: usize, s_a: usize, s_b: usize, rng: &mut R) -> CoordRun {
        match (&self.a, &self.b) {
            (Some(a), Some(b)) if s_a > 0 && s_b > 0 => {
                let u = sample_povm_coords(a, s_a, rng).outcome;
                let v = sample_povm_coords(b, s_b, rng).outcome;
                let w = self.w_for(k, s_a, s_b, &u, &v);
                CoordRun { s_a, s_b, u: Some(u), v: Some(v), w }
            }
            _ => CoordRun { s_a, s_b, u: None, v: None, w: 0.0 },
        }
    }

    fn lift(&self, c: &CVector) -> Result<PureState> {
        PureState::normalize(self.trunc.support_basis() * c)
    }

    pub fn psi_eps(&self) -> Result<Option<PureState>> {
        self.a.as_ref().map(|a| self.lift(a)).transpose()
    }

    pub fn phi_eps(&self) -> Result<Option<PureState>> {
        self.b.as_ref().map(|b| self.lift(b)).transpose()
    }
}

pub fn run_gdipe<R: Rng + ?Sized>(
    trunc: &SpectralTruncation,
    psi: &PureState,
    phi: &PureState,
    k: usize,
    rng: &mut R,
) -> Result<GdipeOutcome> {
    run_gdipe_with(trunc, psi, phi, k, CountMode::Binomial, rng)
}

pub fn run_gdipe_with<R: Rng + ?Sized>(
    trunc: &SpectralTruncation,
    psi: &PureState,
    phi: &PureState,
    k: usize,
    mode: CountMode,
    rng: &mut R,
) -> Result<GdipeOutcome> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let inst = GdipeInstance::new(trunc, psi, phi)?;
    let run = inst.sample(k, mode, rng);
    let (u, v) = match (&run.u, &run.v) {
        (Some(u), Some(v)) => (Some(inst.lift(u)?), Some(inst.lift(v)?)),
        _ => (None, None),
    };
    Ok(GdipeOutcome { s_a: run.s_a, s_b: run.s_b, u, v, w: run.w, psi_eps: inst.psi_eps()?, phi_eps: inst.phi_eps()? })
}

/// `E[w]` including the branches where a party sees no surviving copy:
/// `f + A p_a (1 - (1 - p_b)^k) / k + B p_b (1 - (1 - p_a)^k) / k`, with
/// `f = |<phi|M_eps|psi>|^2`, `A = Tr[M_eps^2 psi_eps]`,
/// `B = Tr[M_eps^2 phi_eps]`, `p_a = <psi|P_eps|psi>`, `p_b = <phi|P_eps|phi>`.
pub fn estimator_mean_closed_form(
    trunc: &SpectralTruncation,
    psi: &PureState,
    phi: &PureState,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let inst = GdipeInstance::new(trunc, psi, phi)?;
    let kf = k as f64;
    let (p_a, p_b) = (inst.p_a, inst.p_b);
    let f = inst.f_normalized() * p_a * p_b;
    let hit_a = 1.0 - (1.0 - p_a).powi(k as i32);
    let hit_b = 1.0 - (1.0 - p_b).powi(k as i32);
    Ok(f + inst.trace_m2_psi() * p_a * hit_b / kf + inst.trace_m2_phi() * p_b * hit_a / kf)
}

/// `E[w | s_a, s_b] = (s_a s_b f + s_a A + s_b B) / k^2` for positive counts,
/// `0` otherwise (`f` uses the normalized projections).
pub fn conditional_mean(
    trunc: &SpectralTruncation,
    psi: &PureState,
    phi: &PureState,
    k: usize,
    s_a: usize,
    s_b: usize,
) -> Result<f64> {
    if k == 0 || s_a > k || s_b > k {
        return Err(Error::InvalidParameter(format!("counts ({s_a}, {s_b}) out of range for k = {k}")));
    }
    if s_a == 0 || s_b == 0 {
        return Ok(0.0);
    }
    let inst = GdipeInstance::new(trunc, psi, phi)?;
    if inst.a.is_none() || inst.b.is_none() {
        return Err(Error::InvalidParameter("positive count for a state annihilated by P_eps".into()));
    }
    let (sa, sb) = (s_a as f64, s_b as f64);
    let kk = (k * k) as f64;
    Ok((sa * sb * inst.f_normalized() + sa * inst.trace_m2_psi() + sb * inst.trace_m2_phi()) / kk)
}

pub const DEFAULT_VARIANCE_CONSTANT: f64 = 64.0;

/// `c (1/k + ||M_eps||_2^2 / k^2 + ||M_eps||_2^4 / k^4)`.
pub fn variance_bound(trunc: &SpectralTruncation, k: usize, constant: f64) -> f64 {
    let h = trunc.hs_norm_sq();
    let k = k as f64;
    constant * (1.0 / k + h / (k * k) + h * h / k.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{haar_state, random_observable, HermitianObservable, C64};
    use crate::rng::StreamFactory;
    use crate::spectral::truncate;
    use crate::stats::Moments;

    #[test]
    fn annihilated_state_gives_zero() {
        let m = HermitianObservable::diagonal(&[1.0, 1.0, 0.0]).unwrap();
        let t = truncate(&m, 0.5).unwrap();
        let psi = PureState::basis(3, 2).unwrap();
        let phi = PureState::basis(3, 0).unwrap();
        let mut rng = StreamFactory::new(1).rng();
        for _ in 0..50 {
            let out = run_gdipe(&t, &psi, &phi, 5, &mut rng).unwrap();
            assert_eq!(out.s_a, 0);
            assert_eq!(out.w, 0.0);
            assert!(out.u.is_none() && out.v.is_none());
        }
        assert_eq!(estimator_mean_closed_form(&t, &psi, &phi, 5).unwrap(), 0.0);
    }

    #[test]
    fn empty_support_gives_zero() {
        let m = HermitianObservable::diagonal(&[0.1, 0.1]).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        let psi = PureState::basis(2, 0).unwrap();
        let out = run_gdipe(&t, &psi, &psi, 3, &mut StreamFactory::new(2).rng()).unwrap();
        assert_eq!((out.s_a, out.s_b, out.w), (0, 0, 0.0));
    }

    #[test]
    fn formula_arithmetic() {
        // d_eps = 4, s_a = s_b = k = 2, M_eps = I, |<u|v>|^2 = 0.5
        let m = HermitianObservable::identity(4).unwrap();
        let t = truncate(&m, 0.5).unwrap();
        let e0 = PureState::basis(4, 0).unwrap();
        let inst = GdipeInstance::new(&t, &e0, &e0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let v = CVector::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert!((inst.w_for(2, 2, 2, &u, &v) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn outcome_invariants() {
        let mut rng = StreamFactory::new(3).rng();
        let m = random_observable(6, &mut rng).unwrap();
        let t = truncate(&m, 0.6).unwrap();
        let psi = haar_state(6, &mut rng).unwrap();
        let phi = haar_state(6, &mut rng).unwrap();
        let d = t.d_eps() as f64;
        for _ in 0..200 {
            let out = run_gdipe(&t, &psi, &phi, 4, &mut rng).unwrap();
            if out.s_a == 0 || out.s_b == 0 {
                assert_eq!(out.w, 0.0);
                continue;
            }
            let u = out.u.as_ref().unwrap();
            let v = out.v.as_ref().unwrap();
            assert!(t.projector().residual(u).unwrap() < 1e-9);
            assert!(t.projector().residual(v).unwrap() < 1e-9);
            let f = t.bilinear(u, v).unwrap().norm_sqr();
            let w = (d + out.s_a as f64) * (d + out.s_b as f64) / 16.0 * f - t.hs_norm_sq() / 16.0;
            assert!((w - out.w).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_examples() {
        let m = HermitianObservable::diagonal(&[1.0, 0.3, -0.2]).unwrap();
        let t = truncate(&m, 0.01).unwrap();
        let e0 = PureState::basis(3, 0).unwrap();
        for k in [1, 5, 40] {
            let v = estimator_mean_closed_form(&t, &e0, &e0, k).unwrap();
            assert!((v - (1.0 + 2.0 / k as f64)).abs() < 1e-12);
            assert!((conditional_mean(&t, &e0, &e0, k, k, k).unwrap() - v).abs() < 1e-12);
        }
        assert_eq!(conditional_mean(&t, &e0, &e0, 4, 0, 3).unwrap(), 0.0);
        assert!(conditional_mean(&t, &e0, &e0, 4, 5, 3).is_err());
    }

    #[test]
    fn bias_is_at_most_two_over_k() {
        let mut rng = StreamFactory::new(4).rng();
        for _ in 0..100 {
            let m = random_observable(5, &mut rng).unwrap();
            let t = truncate(&m, 0.4).unwrap();
            let psi = haar_state(5, &mut rng).unwrap();
            let phi = haar_state(5, &mut rng).unwrap();
            let f = t.bilinear(&phi, &psi).unwrap().norm_sqr();
            for k in [1, 3, 10] {
                let mean = estimator_mean_closed_form(&t, &psi, &phi, k).unwrap();
                assert!((mean - f).abs() <= 2.0 / k as f64);
            }
        }
    }

    #[test]
    fn variance_bound_examples() {
        let m = HermitianObservable::diagonal(&[0.1]).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        assert_eq!(variance_bound(&t, 8, 64.0), 8.0);
        let m = HermitianObservable::diagonal(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        let k = 4.0;
        assert!((variance_bound(&t, 4, 64.0) - 64.0 * (2.0 / k + 1.0 / (k * k))).abs() < 1e-12);
    }

    #[test]
    fn counting_modes_agree_in_distribution() {
        let m = HermitianObservable::diagonal(&[1.0, 0.0]).unwrap();
        let t = truncate(&m, 0.5).unwrap();
        let psi = PureState::from_real(&[0.6, 0.8]).unwrap();
        let inst = GdipeInstance::new(&t, &psi, &psi).unwrap();
        let mut rng = StreamFactory::new(5).rng();
        let k = 10;
        for mode in [CountMode::Binomial, CountMode::Sequential] {
            let m: Moments = (0..20_000).map(|_| inst.sample(k, mode, &mut rng).s_a as f64).collect();
            // mean 3.6, sd sqrt(2.304)
            assert!((m.mean() - 3.6).abs() < 4.0 * m.std_error());
        }
    }

    #[test]
    fn zero_padding_leaves_w_unchanged() {
        let mut rng = StreamFactory::new(6).rng();
        let m = random_observable(5, &mut rng).unwrap();
        let psi = haar_state(5, &mut rng).unwrap();
        let phi = haar_state(5, &mut rng).unwrap();
        let t = truncate(&m, 0.5).unwrap();
        let tp = truncate(&m.embed(3), 0.5).unwrap();
        let root = StreamFactory::new(7);
        let (mut r1, mut r2) = (root.rng(), root.rng());
        for _ in 0..100 {
            let a = run_gdipe(&t, &psi, &phi, 6, &mut r1).unwrap();
            let b = run_gdipe(&tp, &psi.embed(3), &phi.embed(3), 6, &mut r2).unwrap();
            assert_eq!((a.s_a, a.s_b), (b.s_a, b.s_b));
            assert!((a.w - b.w).abs() < 1e-9);
        }
    }
}
