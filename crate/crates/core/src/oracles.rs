//! Closed-form evaluators and brute-force Monte-Carlo oracles.
//!
//! The moment oracles here sample their own posterior variables (Beta laws
//! through sums of exponentials, complements through projected Gaussians)
//! instead of calling the protocol samplers, so agreement between the two is
//! meaningful.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dipe::{run_dipe, DipeParams};
use crate::error::{Error, Result};
use crate::gdipe::{run_gdipe, GdipeInstance};
use crate::qmath::{
    gaussian_vector, haar_state, overlap, CMatrix, CVector, HermitianObservable, PureState, C64, ZERO_TOL,
};
use crate::rng::{label, StreamFactory};
use crate::spectral::{truncate, SpectralTruncation};
use crate::stats::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentKind {
    ExactIdentity,
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: String,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    pub kind: MomentKind,
    pub pass: bool,
}

impl MomentReport {
    pub fn new(name: &str, kind: MomentKind, closed_form: f64, mc: &Moments) -> Self {
        let (est, se) = (mc.mean(), mc.std_error());
        let pass = match kind {
            MomentKind::ExactIdentity => (closed_form - est).abs() <= 3.0 * se,
            MomentKind::UpperBound => est <= closed_form + 3.0 * se,
        };
        Self { name: name.to_string(), closed_form, mc_estimate: est, mc_std_error: se, kind, pass }
    }
}

/// One JSON object per line.
pub fn to_json_lines(reports: &[MomentReport]) -> String {
    reports.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermReports {
    pub reports: Vec<MomentReport>,
    /// Reports that need a complement direction and were not evaluated.
    pub skipped: Vec<String>,
}

impl TermReports {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Scalars of the `(M_eps, psi_eps, phi_eps)` instance in support coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermScalars {
    pub d: f64,
    /// `|<psi_eps|M_eps|phi_eps>|^2`.
    pub f: f64,
    /// `Tr[M_eps^2 psi_eps]`.
    pub a: f64,
    /// `Tr[M_eps^2 phi_eps]`.
    pub b: f64,
    /// `Tr[M_eps^2]`.
    pub t: f64,
}

/// `(d + s_a + 1)(d + s_a)(d + s_b + 1)(d + s_b)`.
pub fn denominator(d: f64, s_a: usize, s_b: usize) -> f64 {
    let (sa, sb) = (s_a as f64, s_b as f64);
    (d + sa + 1.0) * (d + sa) * (d + sb + 1.0) * (d + sb)
}

/// `E|g|^2 |h|^2 = (s_a+1)(s_b+1)(A - f)(B - f) / D`.
pub fn g2h2_exact(s: &TermScalars, s_a: usize, s_b: usize) -> f64 {
    let dd = denominator(s.d, s_a, s_b);
    (s_a as f64 + 1.0) * (s_b as f64 + 1.0) * (s.a - s.f) * (s.b - s.f) / dd
}

/// The four-term split of `<u|M|v>` for one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    pub q: C64,
    pub g: C64,
    pub h: C64,
    pub l: C64,
}

/// `Gamma(n, 1)` for integer `n` as a sum of exponentials.
fn gamma_int<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum()
}

/// `Beta(a, b)` for integer parameters via the gamma ratio.
fn beta_int<R: Rng + ?Sized>(a: usize, b: usize, rng: &mut R) -> f64 {
    let x = gamma_int(a, rng);
    let y = gamma_int(b, rng);
    x / (x + y)
}

fn orthogonal_unit<R: Rng + ?Sized>(c: &CVector, rng: &mut R) -> CVector {
    loop {
        let g = gaussian_vector(c.len(), rng);
        let r = &g - c * c.dotc(&g);
        let n = r.norm();
        if n > ZERO_TOL {
            return r.unscale(n);
        }
    }
}

struct Sampler<'a> {
    m: &'a CMatrix,
    a: &'a CVector,
    b: &'a CVector,
    x: C64,
    s_a: usize,
    s_b: usize,
}

impl Sampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Terms, CVector, CVector) {
        let d = self.a.len();
        let alpha_sq = beta_int(self.s_a + 1, d - 1, rng);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let beta_sq = beta_int(self.s_b + 1, d - 1, rng);
        let theta_p = rng.random_range(0.0..std::f64::consts::TAU);
        let psi_p = orthogonal_unit(self.a, rng);
        let phi_p = orthogonal_unit(self.b, rng);

        let (al, be) = (alpha_sq.sqrt(), beta_sq.sqrt());
        let (al_c, be_c) = ((1.0 - alpha_sq).max(0.0).sqrt(), (1.0 - beta_sq).max(0.0).sqrt());
        let form = |u: &CVector, v: &CVector| u.dotc(&(self.m * v));
        let terms = Terms {
            q: C64::from_polar(al * be, theta_p - theta) * self.x,
            g: C64::from_polar(al_c * be, theta_p) * form(&psi_p, self.b),
            h: C64::from_polar(al * be_c, -theta) * form(self.a, &phi_p),
            l: C64::new(al_c * be_c, 0.0) * form(&psi_p, &phi_p),
        };
        let u = self.a * C64::from_polar(al, theta) + &psi_p * C64::new(al_c, 0.0);
        let v = self.b * C64::from_polar(be, theta_p) + &phi_p * C64::new(be_c, 0.0);
        (terms, u, v)
    }
}

/// Closed forms and bounds for the moments of `q, g, h, l`, each checked
/// against `samples` direct draws of the posterior variables.
pub fn term_evaluators<R: Rng + ?Sized>(
    trunc: &SpectralTruncation,
    psi: &PureState,
    phi: &PureState,
    s_a: usize,
    s_b: usize,
    samples: usize,
    rng: &mut R,
) -> Result<TermReports> {
    if s_a == 0 || s_b == 0 {
        return Err(Error::InvalidParameter("s_a and s_b must be positive".into()));
    }
    let inst = GdipeInstance::new(trunc, psi, phi)?;
    let (a, b) = match (inst.psi_coords(), inst.phi_coords()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Err(Error::InvalidParameter("P_eps annihilates an input state".into())),
    };
    let sc = TermScalars {
        d: inst.d_eps() as f64,
        f: inst.f_normalized(),
        a: inst.trace_m2_psi(),
        b: inst.trace_m2_phi(),
        t: trunc.hs_norm_sq(),
    };
    let (sa, sb) = (s_a as f64, s_b as f64);
    let dd = denominator(sc.d, s_a, s_b);
    let q4_closed = (sa + 2.0) * (sa + 1.0) * (sb + 2.0) * (sb + 1.0) * sc.f * sc.f / dd;
    let m = trunc.support_matrix();
    let x = a.dotc(&(m * &b));

    if inst.d_eps() < 2 {
        // u = e^{i theta} psi_eps, so |q|^4 = f^2 exactly
        let mut mc = Moments::new();
        for _ in 0..samples {
            mc.push(x.norm_sqr().powi(2));
        }
        return Ok(TermReports {
            reports: vec![MomentReport::new("q4_exact", MomentKind::ExactIdentity, q4_closed, &mc)],
            skipped: COMPLEMENT_REPORTS.iter().map(|s| s.to_string()).collect(),
        });
    }

    let sampler = Sampler { m, a: &a, b: &b, x, s_a, s_b };
    let mut acc: Vec<Moments> = vec![Moments::new(); NAMES.len()];
    for _ in 0..samples {
        let (t, _, _) = sampler.draw(rng);
        let (q2, g2, h2, l2) = (t.q.norm_sqr(), t.g.norm_sqr(), t.h.norm_sqr(), t.l.norm_sqr());
        let values = [
            q2 * q2,
            q2 * l2,
            g2 * h2,
            g2 * g2,
            h2 * h2,
            l2 * l2,
            g2 * h2,
            l2 * h2,
            l2 * g2,
            q2 * g2,
            q2 * h2,
            q2 * l2,
            2.0 * (t.q * t.l * t.g.conj() * t.h.conj()).re,
        ];
        for (m, v) in acc.iter_mut().zip(values) {
            m.push(v);
        }
    }

    // complement cross-moments sampled on their own
    let mut left = Moments::new();
    let mut right = Moments::new();
    for _ in 0..samples {
        let psi_p = orthogonal_unit(&a, rng);
        let phi_p = orthogonal_unit(&b, rng);
        left.push(psi_p.dotc(&(m * &b)).norm_sqr());
        right.push(a.dotc(&(m * &phi_p)).norm_sqr());
    }

    let closed = [
        (MomentKind::ExactIdentity, q4_closed),
        (MomentKind::ExactIdentity, (sa + 1.0) * (sb + 1.0) / dd * sc.f * (sc.t - sc.a - sc.b + sc.f)),
        (MomentKind::ExactIdentity, g2h2_exact(&sc, s_a, s_b)),
        (MomentKind::UpperBound, 2.0 * (sb + 2.0) * (sb + 1.0) / dd),
        (MomentKind::UpperBound, 2.0 * (sa + 2.0) * (sa + 1.0) / dd),
        (MomentKind::UpperBound, (2.0 * (sc.t + 1.0).powi(2) + 12.0) / dd),
        (MomentKind::UpperBound, (sa + 1.0) * (sb + 1.0) / dd),
        (MomentKind::UpperBound, (sa + 1.0) * (sc.t + 9.0) / dd),
        (MomentKind::UpperBound, (sb + 1.0) * (sc.t + 9.0) / dd),
        (MomentKind::UpperBound, (sb + 2.0) * (sb + 1.0) * (sa + 1.0) / dd),
        (MomentKind::UpperBound, (sa + 2.0) * (sa + 1.0) * (sb + 1.0) / dd),
        (MomentKind::UpperBound, (sa + 1.0) * (sb + 1.0) * sc.t / dd),
        (MomentKind::UpperBound, 2.0 * (sa + 1.0) * (sb + 1.0) / dd),
    ];
    let mut reports: Vec<MomentReport> = NAMES
        .iter()
        .zip(closed)
        .zip(&acc)
        .map(|((name, (kind, c)), mc)| MomentReport::new(name, kind, c, mc))
        .collect();
    reports.push(MomentReport::new(
        "complement_left_exact",
        MomentKind::ExactIdentity,
        (sc.b - sc.f) / (sc.d - 1.0),
        &left,
    ));
    reports.push(MomentReport::new(
        "complement_right_exact",
        MomentKind::ExactIdentity,
        (sc.a - sc.f) / (sc.d - 1.0),
        &right,
    ));
    Ok(TermReports { reports, skipped: Vec::new() })
}

const NAMES: [&str; 13] = [
    "q4_exact",
    "q2l2_exact",
    "g2h2_exact",
    "g4_bound",
    "h4_bound",
    "l4_bound",
    "g2h2_bound",
    "l2h2_bound",
    "l2g2_bound",
    "q2g2_bound",
    "q2h2_bound",
    "q2l2_bound",
    "cross_bound",
];

const COMPLEMENT_REPORTS: [&str; 14] = [
    "q2l2_exact",
    "g2h2_exact",
    "g4_bound",
    "h4_bound",
    "l4_bound",
    "g2h2_bound",
    "l2h2_bound",
    "l2g2_bound",
    "q2g2_bound",
    "q2h2_bound",
    "q2l2_bound",
    "cross_bound",
    "complement_left_exact",
    "complement_right_exact",
];

/// Frobenius deviations of the empirical first and second Haar moments from
/// `I / d` and `(I + SWAP) / (d (d + 1))`.
pub fn haar_moment_deviation<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    let mut first = CMatrix::zeros(d, d);
    let mut second = CMatrix::zeros(d * d, d * d);
    for _ in 0..n {
        let s = haar_state(d, rng)?;
        let v = s.amplitudes();
        first.gerc(C64::new(1.0, 0.0), v, v, C64::new(1.0, 0.0));
        let vv = v.kronecker(v);
        // second += vv vv^dagger
        for j in 0..d * d {
            let cj = vv[j].conj();
            for i in 0..d * d {
                second[(i, j)] += vv[i] * cj;
            }
        }
    }
    let nf = n as f64;
    first.unscale_mut(nf);
    second.unscale_mut(nf);

    let mut target1 = CMatrix::identity(d, d);
    target1.unscale_mut(d as f64);
    let mut target2 = CMatrix::identity(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            // SWAP |i j> = |j i>
            target2[(j * d + i, i * d + j)] += C64::new(1.0, 0.0);
        }
    }
    target2.unscale_mut((d * (d + 1)) as f64);
    Ok(((first - target1).norm(), (second - target2).norm()))
}

/// `sin^{2d-2}(eps')`, the Haar mass of `{phi : |<phi|psi>| >= cos eps'}`.
pub fn ball_measure_closed_form(d: usize, eps_prime: f64) -> f64 {
    eps_prime.sin().powi(2 * d as i32 - 2)
}

/// Empirical Haar mass of `{phi : |<phi|0>| >= cos eps'}`.
pub fn ball_measure_rate<R: Rng + ?Sized>(d: usize, eps_prime: f64, n: usize, rng: &mut R) -> Result<f64> {
    let c = eps_prime.cos();
    let mut hits = 0usize;
    for _ in 0..n {
        let s = haar_state(d, rng)?;
        if s.amplitudes()[0].norm() >= c {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// `psi` Haar and `phi = sqrt(o) psi + sqrt(1 - o) chi` with `chi` Haar on
/// the complement of `psi`, so `|<psi|phi>|^2 = o`.
pub fn planted_pair<R: Rng + ?Sized>(d: usize, overlap_sq: f64, rng: &mut R) -> Result<(PureState, PureState)> {
    if !(0.0..=1.0).contains(&overlap_sq) {
        return Err(Error::InvalidParameter(format!("overlap {overlap_sq} outside [0, 1]")));
    }
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let psi = haar_state(d, rng)?;
    let chi = orthogonal_unit(psi.amplitudes(), rng);
    let phi = psi.amplitudes() * C64::new(overlap_sq.sqrt(), 0.0) + chi * C64::new((1.0 - overlap_sq).sqrt(), 0.0);
    Ok((psi, PureState::normalize(phi)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub d: usize,
    pub epsilon: Option<f64>,
    pub theta: Option<f64>,
    pub theta_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionInstance {
    pub label: Label,
    pub psi: PureState,
    pub phi: PureState,
    pub params: DecisionParams,
}

/// YES: one Haar state twice. NO: two independent Haar states.
pub fn gen_dipe_instance<R: Rng + ?Sized>(d: usize, label: Label, rng: &mut R) -> Result<DecisionInstance> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let psi = haar_state(d, rng)?;
    let phi = match label {
        Label::Yes => psi.clone(),
        Label::No => haar_state(d, rng)?,
    };
    Ok(DecisionInstance {
        label,
        psi,
        phi,
        params: DecisionParams { d, epsilon: None, theta: None, theta_prime: None },
    })
}

/// Haar unit vector on the complement of `|0>`.
fn haar_off_zero<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    loop {
        let mut g = gaussian_vector(d, rng);
        g[0] = C64::new(0.0, 0.0);
        let n = g.norm();
        if n > ZERO_TOL {
            return g.unscale(n);
        }
    }
}

/// `psi = sqrt(1-eps) e^{i theta}|0> + sqrt(eps)|chi>`; YES shares `chi` with
/// `phi` (fresh phase `theta'`), NO draws an independent `chi'`.
pub fn gen_ip_decision_instance<R: Rng + ?Sized>(
    d: usize,
    epsilon: f64,
    label: Label,
    rng: &mut R,
) -> Result<DecisionInstance> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let theta_prime = rng.random_range(0.0..std::f64::consts::TAU);
    let chi = haar_off_zero(d, rng);
    let chi_b = match label {
        Label::Yes => chi.clone(),
        Label::No => haar_off_zero(d, rng),
    };
    let build = |phase: f64, c: &CVector| {
        let mut v = c * C64::new(epsilon.sqrt(), 0.0);
        v[0] = C64::from_polar((1.0 - epsilon).sqrt(), phase);
        v
    };
    let psi = PureState::new(build(theta, &chi))?;
    let phi = PureState::new(build(theta_prime, &chi_b))?;
    Ok(DecisionInstance {
        label,
        psi,
        phi,
        params: DecisionParams { d, epsilon: Some(epsilon), theta: Some(theta), theta_prime: Some(theta_prime) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionProtocol {
    Dipe(DipeParams),
    /// The bilinear estimator with `M = I`.
    Gdipe {
        k: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRates {
    pub yes_accept_rate: f64,
    pub no_reject_rate: f64,
}

/// Acceptance rule used by [`decision_experiment`].
pub const ACCEPT_THRESHOLD: f64 = 0.5;

/// Estimate of `|<psi|phi>|^2` from one protocol run on one instance.
pub fn decision_estimate(
    protocol: &DecisionProtocol,
    identity: Option<&SpectralTruncation>,
    inst: &DecisionInstance,
    block: usize,
    stream: &StreamFactory,
) -> Result<f64> {
    match protocol {
        DecisionProtocol::Dipe(params) => Ok(run_dipe(&inst.psi, &inst.phi, block, params, stream)?.estimate),
        DecisionProtocol::Gdipe { k } => {
            let t = identity.ok_or_else(|| Error::InvalidParameter("missing identity truncation".into()))?;
            Ok(run_gdipe(t, &inst.psi, &inst.phi, *k, &mut stream.rng())?.w)
        }
    }
}

/// Run `trials` YES and `trials` NO DIPE instances; accept iff the estimate
/// is at least [`ACCEPT_THRESHOLD`].
///
/// Trial `i` of label `l` draws its instance from `root/TRIAL/l/i/INSTANCE`
/// and its protocol randomness from `root/TRIAL/l/i/PROTOCOL`.
pub fn decision_experiment(
    protocol: &DecisionProtocol,
    d: usize,
    block: usize,
    trials: usize,
    root: &StreamFactory,
) -> Result<DecisionRates> {
    let identity = match protocol {
        DecisionProtocol::Gdipe { .. } => Some(truncate(&HermitianObservable::identity(d)?, 1.0)?),
        DecisionProtocol::Dipe(_) => None,
    };
    let mut accepted = [0usize; 2];
    for (li, lab) in [Label::Yes, Label::No].into_iter().enumerate() {
        for i in 0..trials {
            let base = root.path(&[label::TRIAL, li as u64, i as u64]);
            let inst = gen_dipe_instance(d, lab, &mut base.child(label::INSTANCE).rng())?;
            let est = decision_estimate(protocol, identity.as_ref(), &inst, block, &base.child(label::PROTOCOL))?;
            if est >= ACCEPT_THRESHOLD {
                accepted[li] += 1;
            }
        }
    }
    let n = trials.max(1) as f64;
    Ok(DecisionRates { yes_accept_rate: accepted[0] as f64 / n, no_reject_rate: 1.0 - accepted[1] as f64 / n })
}

/// `|<phi|psi>|^2` expected for a YES ip-decision instance.
pub fn ip_decision_yes_overlap(epsilon: f64, theta: f64, theta_prime: f64) -> f64 {
    let e = epsilon;
    (1.0 - e).powi(2) + e * e + 2.0 * e * (1.0 - e) * (theta - theta_prime).cos()
}

/// Squared overlap of an instance's two states.
pub fn instance_overlap(inst: &DecisionInstance) -> Result<f64> {
    Ok(overlap(&inst.psi, &inst.phi)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::random_observable;
    use crate::sampling::posterior_moments;

    #[test]
    fn q4_substitution_example() {
        // M = I, psi = phi, s_a = s_b = 1, d_eps = 4
        let dd = denominator(4.0, 1, 1);
        assert_eq!(dd, 900.0);
        assert!((3.0 * 2.0 * 3.0 * 2.0 / dd - 0.04).abs() < 1e-15);

        let m = HermitianObservable::identity(4).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        let e0 = PureState::basis(4, 0).unwrap();
        let r = term_evaluators(&t, &e0, &e0, 1, 1, 10, &mut StreamFactory::new(1).rng()).unwrap();
        assert!((r.reports[0].closed_form - 0.04).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_support_keeps_complement_reports() {
        let m = HermitianObservable::diagonal(&[1.0, -1.0, 0.0]).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        let s = PureState::from_real(&[0.6, 0.8, 0.0]).unwrap();
        let r = term_evaluators(&t, &s, &s, 2, 3, 2000, &mut StreamFactory::new(2).rng()).unwrap();
        assert!(r.skipped.is_empty());
        assert_eq!(r.reports.len(), 15);
    }

    #[test]
    fn one_dimensional_support_skips_complements() {
        let m = HermitianObservable::diagonal(&[1.0, 0.1]).unwrap();
        let t = truncate(&m, 1.0).unwrap();
        let e0 = PureState::basis(2, 0).unwrap();
        let r = term_evaluators(&t, &e0, &e0, 2, 2, 100, &mut StreamFactory::new(3).rng()).unwrap();
        assert_eq!(r.reports.len(), 1);
        assert_eq!(r.skipped.len(), 14);
        assert!(r.all_pass());
    }

    #[test]
    fn terms_reassemble_the_bilinear_form() {
        let mut rng = StreamFactory::new(4).rng();
        let m = random_observable(5, &mut rng).unwrap();
        let t = truncate(&m, 0.2).unwrap();
        let psi = haar_state(5, &mut rng).unwrap();
        let phi = haar_state(5, &mut rng).unwrap();
        let inst = GdipeInstance::new(&t, &psi, &phi).unwrap();
        let (a, b) = (inst.psi_coords().unwrap(), inst.phi_coords().unwrap());
        let sm = t.support_matrix();
        let sampler = Sampler { m: sm, a, b, x: a.dotc(&(sm * b)), s_a: 3, s_b: 2 };
        for _ in 0..20 {
            let (terms, u, v) = sampler.draw(&mut rng);
            let full = u.dotc(&(sm * &v));
            assert!((terms.q + terms.g + terms.h + terms.l - full).norm() < 1e-12);
            // the quartic cross term carries no phase dependence
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_beta_matches_posterior_moments() {
        let mut rng = StreamFactory::new(5).rng();
        let (d, s) = (4, 3);
        let mc: Moments = (0..40_000).map(|_| beta_int(s + 1, d - 1, &mut rng)).collect();
        let pm = posterior_moments(d, s);
        assert!((mc.mean() - pm.alpha_sq).abs() < 4.0 * mc.std_error());
    }

    #[test]
    fn literal_bivariate_bound_fails_when_states_are_orthogonal() {
        // f = 0 makes the f^2 form of the bound vanish while E|g|^2|h|^2 > 0
        let sc = TermScalars { d: 4.0, f: 0.0, a: 1.0, b: 1.0, t: 4.0 };
        let exact = g2h2_exact(&sc, 2, 2);
        let literal = 3.0 * 3.0 * sc.f * sc.f / denominator(4.0, 2, 2);
        assert!(exact > literal);
        assert!(exact <= 9.0 / denominator(4.0, 2, 2));
    }

    #[test]
    fn instance_constructions() {
        let mut rng = StreamFactory::new(6).rng();
        let yes = gen_dipe_instance(6, Label::Yes, &mut rng).unwrap();
        assert_eq!(yes.psi, yes.phi);
        assert!((instance_overlap(&yes).unwrap() - 1.0).abs() < 1e-12);

        for lab in [Label::Yes, Label::No] {
            let inst = gen_ip_decision_instance(8, 0.3, lab, &mut rng).unwrap();
            assert!((inst.psi.amplitudes()[0].norm_sqr() - 0.7).abs() < 1e-12);
            assert!((inst.phi.amplitudes()[0].norm_sqr() - 0.7).abs() < 1e-12);
        }
        let inst = gen_ip_decision_instance(8, 0.3, Label::Yes, &mut rng).unwrap();
        let (th, thp) = (inst.params.theta.unwrap(), inst.params.theta_prime.unwrap());
        let expect = C64::from_polar(0.7, th - thp) + C64::new(0.3, 0.0);
        assert!((overlap(&inst.phi, &inst.psi).unwrap() - expect).norm() < 1e-10);
        assert!((instance_overlap(&inst).unwrap() - ip_decision_yes_overlap(0.3, th, thp)).abs() < 1e-10);

        assert!(gen_ip_decision_instance(8, 1.0, Label::Yes, &mut rng).is_err());
        assert!(gen_dipe_instance(1, Label::Yes, &mut rng).is_err());
    }

    #[test]
    fn planted_overlap_is_exact() {
        let mut rng = StreamFactory::new(7).rng();
        for o in [0.0, 0.25, 0.5, 1.0] {
            let (psi, phi) = planted_pair(16, o, &mut rng).unwrap();
            assert!((overlap(&psi, &phi).unwrap().norm_sqr() - o).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_report_pass_rules() {
        let mc: Moments = [1.0, 1.2, 0.8, 1.1, 0.9].into_iter().collect();
        assert!(MomentReport::new("x", MomentKind::ExactIdentity, 1.0, &mc).pass);
        assert!(!MomentReport::new("x", MomentKind::ExactIdentity, 2.0, &mc).pass);
        assert!(MomentReport::new("x", MomentKind::UpperBound, 5.0, &mc).pass);
        assert!(!MomentReport::new("x", MomentKind::UpperBound, 0.5, &mc).pass);
        let line = to_json_lines(&[MomentReport::new("x", MomentKind::UpperBound, 5.0, &mc)]);
        assert!(line.contains("\"kind\":\"upper-bound\""));
        assert!(line.ends_with('\n'));
    }

    #[test]
    fn decision_with_full_block_accepts_every_yes() {
        let r = decision_experiment(&DecisionProtocol::Dipe(DipeParams::default()), 8, 8, 20, &StreamFactory::new(8))
            .unwrap();
        assert_eq!(r.yes_accept_rate, 1.0);
    }

    #[test]
    fn haar_moment_deviation_shrinks_with_samples() {
        let mut rng = StreamFactory::new(12).rng();
        let (f_small, s_small) = haar_moment_deviation(3, 400, &mut rng).unwrap();
        let (f_big, s_big) = haar_moment_deviation(3, 40_000, &mut rng).unwrap();
        // deviations scale like n^{-1/2}
        assert!(f_big < 0.02 && s_big < 0.02, "{f_big} {s_big}");
        assert!(f_big < f_small / 3.0 && s_big < s_small / 3.0);
    }
}
