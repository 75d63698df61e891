//! Verification suites: each produces a list of [`Check`]s with the observed
//! value, its reference and the tolerance it was judged against.
//!
//! `scale` multiplies every sample count. Checks with a fixed absolute
//! tolerance widen it by `1 / sqrt(scale)` so reduced runs stay meaningful.

use std::thread;
use std::time::Duration;

use anyhow::{bail, Result};
use rand::Rng;
use serde::Serialize;

use dipe_core::gdipe::{conditional_mean, estimator_mean_closed_form, variance_bound, CountMode, GdipeInstance};
use dipe_core::oracles::{
    ball_measure_closed_form, ball_measure_rate, haar_moment_deviation, term_evaluators, MomentKind,
};
use dipe_core::qmath::{haar_state, random_observable, CVector};
use dipe_core::sampling::{haar_norm_concentration_check, posterior_moments, sample_povm_coords};
use dipe_core::spectral::{truncate, truncation_gap};
use dipe_core::stats::Moments;
use dipe_core::{StreamFactory, C64};
use dipe_net::channel::{Direction, TranscriptEntry};
use dipe_net::referee::bind;
use dipe_net::wire::tag_name;
use dipe_net::{alice_run, bob_run, in_process_estimate, referee_serve, RefereeConfig, RunSummary};

use crate::config::{Axis, Experiment, GridConfig};
use crate::sweep::{observable_with_support, run_point};

pub const SUITES: [&str; 11] = [
    "haar",
    "povm",
    "truncation",
    "gdipe-mean",
    "gdipe-variance",
    "gdipe-moments",
    "dipe",
    "scaling",
    "decision",
    "net",
    "all",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `|observed - expected| <= tolerance`.
    Within,
    /// `observed <= expected + tolerance`.
    AtMost,
    /// `observed >= expected - tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub relation: Relation,
    /// Monte-Carlo standard error of `observed`, when it is a sample mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(
        suite: &str,
        name: impl Into<String>,
        observed: f64,
        expected: f64,
        tolerance: f64,
        relation: Relation,
    ) -> Self {
        let pass = match relation {
            Relation::Within => (observed - expected).abs() <= tolerance,
            Relation::AtMost => observed <= expected + tolerance,
            Relation::AtLeast => observed >= expected - tolerance,
        };
        Self { suite: suite.into(), name: name.into(), observed, expected, tolerance, relation, std_error: None, pass }
    }

    fn with_se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub selector: String,
    pub seed: u64,
    pub scale: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

fn widen(tol: f64, scale: f64) -> f64 {
    if scale >= 1.0 {
        tol
    } else {
        tol / scale.sqrt()
    }
}

fn suite_root(seed: u64, suite: &str) -> StreamFactory {
    let idx = SUITES.iter().position(|s| *s == suite).unwrap_or(SUITES.len()) as u64;
    StreamFactory::new(seed).path(&[Experiment::Verify.stream_label(), idx])
}

pub fn haar(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "haar");
    let (first, second) = haar_moment_deviation(8, scaled(200_000, scale), &mut root.child(1).rng())?;
    let rate = ball_measure_rate(6, 1.0, scaled(100_000, scale), &mut root.child(2).rng())?;
    let conc = haar_norm_concentration_check(128, 96, scaled(500, scale), 0.5, &mut root.child(3).rng())?;
    Ok(vec![
        Check::new("haar", "first moment |E[psi] - I/8|_F", first, 0.0, widen(0.01, scale), Relation::AtMost),
        Check::new(
            "haar",
            "second moment |E[psi x psi] - (I+SWAP)/72|_F",
            second,
            0.0,
            widen(0.02, scale),
            Relation::AtMost,
        ),
        Check::new(
            "haar",
            "ball measure d=6 eps'=1",
            rate,
            ball_measure_closed_form(6, 1.0),
            widen(0.010, scale),
            Relation::Within,
        ),
        Check::new("haar", "norm concentration d=128 block=96", conc.failure_rate, conc.bound, 0.0, Relation::AtMost),
    ])
}

pub fn povm(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "povm");
    let n = scaled(100_000, scale);
    let mut out = Vec::new();
    for d_w in 2..=8usize {
        let mut cond = CVector::zeros(d_w);
        cond[0] = C64::new(1.0, 0.0);
        for copies in 0..=6usize {
            let mut rng = root.path(&[d_w as u64, copies as u64]).rng();
            let (mut m1, mut m2, mut m3) = (Moments::new(), Moments::new(), Moments::new());
            for _ in 0..n {
                let a = sample_povm_coords(&cond, copies, &mut rng).alpha_sq;
                m1.push(a);
                m2.push(a * a);
                m3.push((1.0 - a) * (1.0 - a));
            }
            let pm = posterior_moments(d_w, copies);
            for (what, m, closed) in
                [("E[a^2]", m1, pm.alpha_sq), ("E[a^4]", m2, pm.alpha_4), ("E[(1-a^2)^2]", m3, pm.one_minus_sq)]
            {
                let name = format!("d_w={d_w} copies={copies} {what}");
                out.push(
                    Check::new("povm", name, m.mean(), closed, 3.0 * m.std_error(), Relation::Within)
                        .with_se(m.std_error()),
                );
            }
        }
    }
    Ok(out)
}

pub fn truncation(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "truncation");
    let n = scaled(1_000, scale);
    let (mut worst, mut violations) = (0.0f64, 0usize);
    for i in 0..n {
        let mut rng = root.child(i as u64).rng();
        let m = random_observable(8, &mut rng)?;
        let eps = 1.0 - rng.random::<f64>();
        let (psi, phi) = (haar_state(8, &mut rng)?, haar_state(8, &mut rng)?);
        let t = truncate(&m, eps)?;
        let ratio = truncation_gap(&m, &t, &phi, &psi)? / (eps / 2.0);
        worst = worst.max(ratio);
        if ratio > 1.0 {
            violations += 1;
        }
    }
    Ok(vec![
        Check::new("truncation", "violations of gap <= eps/2", violations as f64, 0.0, 0.0, Relation::AtMost),
        Check::new("truncation", "max gap / (eps/2)", worst, 1.0, 0.0, Relation::AtMost),
    ])
}

pub const GDIPE_MEAN_K: usize = 25;
pub const CONDITIONAL_COUNTS: [(usize, usize); 5] = [(1, 1), (3, 5), (12, 20), (25, 25), (0, 7)];

pub fn gdipe_mean(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "gdipe-mean");
    let n = scaled(200_000, scale);
    let k = GDIPE_MEAN_K;
    let mut out = Vec::new();
    for i in 0..20u64 {
        let mut rng = root.path(&[i, 0]).rng();
        let m = random_observable(8, &mut rng)?;
        let (psi, phi) = (haar_state(8, &mut rng)?, haar_state(8, &mut rng)?);
        let t = truncate(&m, 0.3)?;
        let inst = GdipeInstance::new(&t, &psi, &phi)?;
        let closed = estimator_mean_closed_form(&t, &psi, &phi, k)?;
        let f = t.bilinear(&phi, &psi)?.norm_sqr();
        let mut rng = root.path(&[i, 1]).rng();
        let w: Moments = (0..n).map(|_| inst.sample(k, CountMode::Binomial, &mut rng).w).collect();
        let se = w.std_error();
        out.push(
            Check::new("gdipe-mean", format!("instance {i} E[w]"), w.mean(), closed, 3.0 * se, Relation::Within)
                .with_se(se),
        );
        out.push(Check::new(
            "gdipe-mean",
            format!("instance {i} bias"),
            (closed - f).abs(),
            2.0 / k as f64,
            0.0,
            Relation::AtMost,
        ));
        if i == 0 {
            for (j, &(sa, sb)) in CONDITIONAL_COUNTS.iter().enumerate() {
                let mut rng = root.path(&[i, 2, j as u64]).rng();
                let w: Moments = (0..n).map(|_| inst.sample_given(k, sa, sb, &mut rng).w).collect();
                let closed = conditional_mean(&t, &psi, &phi, k, sa, sb)?;
                let se = w.std_error();
                let name = format!("instance 0 E[w | s_a={sa}, s_b={sb}]");
                out.push(Check::new("gdipe-mean", name, w.mean(), closed, 3.0 * se, Relation::Within).with_se(se));
            }
        }
    }
    Ok(out)
}

pub fn gdipe_variance(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "gdipe-variance");
    let n = scaled(200_000, scale);
    let mut out = Vec::new();
    for de in [4usize, 8, 16] {
        let mut rng = root.path(&[de as u64, 0]).rng();
        let d = de + 4;
        let m = observable_with_support(d, de, 0.3, &mut rng)?;
        let (psi, phi) = (haar_state(d, &mut rng)?, haar_state(d, &mut rng)?);
        let t = truncate(&m, 0.3)?;
        let inst = GdipeInstance::new(&t, &psi, &phi)?;
        for k in [10usize, 40, 160] {
            let mut rng = root.path(&[de as u64, k as u64]).rng();
            let w: Moments = (0..n).map(|_| inst.sample(k, CountMode::Binomial, &mut rng).w).collect();
            let bound = variance_bound(&t, k, 64.0);
            out.push(Check::new(
                "gdipe-variance",
                format!("d_eps={de} k={k} Var(w)"),
                w.variance(),
                bound,
                0.0,
                Relation::AtMost,
            ));
        }
    }
    Ok(out)
}

pub fn gdipe_moments(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let root = suite_root(seed, "gdipe-moments");
    let n = scaled(40_000, scale);
    let mut out = Vec::new();
    let mut i = 0u64;
    let mut evaluated = 0;
    while evaluated < 20 {
        let mut rng = root.child(i).rng();
        i += 1;
        let m = random_observable(8, &mut rng)?;
        let t = truncate(&m, 0.3)?;
        if t.d_eps() < 2 {
            continue;
        }
        let (psi, phi) = (haar_state(8, &mut rng)?, haar_state(8, &mut rng)?);
        let (sa, sb) = (rng.random_range(1..=6usize), rng.random_range(1..=6usize));
        let rep = term_evaluators(&t, &psi, &phi, sa, sb, n, &mut rng)?;
        for r in rep.reports {
            let (relation, tol) = match r.kind {
                MomentKind::ExactIdentity => (Relation::Within, 3.0 * r.mc_std_error),
                MomentKind::UpperBound => (Relation::AtMost, 3.0 * r.mc_std_error),
            };
            let name = format!("instance {evaluated} (s_a={sa}, s_b={sb}) {}", r.name);
            out.push(
                Check::new("gdipe-moments", name, r.mc_estimate, r.closed_form, tol, relation).with_se(r.mc_std_error),
            );
        }
        evaluated += 1;
    }
    Ok(out)
}

fn dipe_grid(seed: u64, d: usize, q: usize, trials: usize) -> GridConfig {
    let mut g = GridConfig::new(Experiment::Dipe);
    g.seed = seed;
    g.d = Axis::One(d);
    g.q = Axis::One(q);
    g.trials = trials;
    g.target_pairs = Some(20);
    g
}

pub fn dipe(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let trials = scaled(200, scale);
    let mut out = Vec::new();
    for overlap in [0.0, 0.5, 1.0] {
        let mut g = dipe_grid(seed, 64, 16, trials);
        g.overlap = Axis::One(overlap);
        let (records, summary) = run_point(&g.points()?[0], 0)?;
        let close = records.iter().filter(|r| r.abs_error <= 0.3).count() as f64 / trials as f64;
        out.push(Check::new(
            "dipe",
            format!("overlap {overlap}: fraction with |error| <= 0.3"),
            close,
            0.9,
            0.0,
            Relation::AtLeast,
        ));
        if overlap == 1.0 {
            let exact = records.iter().filter(|r| r.estimate == 1.0).count() as f64 / trials as f64;
            out.push(Check::new(
                "dipe",
                "psi = phi: fraction with estimate exactly 1",
                exact,
                1.0,
                0.0,
                Relation::AtLeast,
            ));
        }
        let raw = summary.mean_round_collisions.unwrap_or(f64::NAN);
        let expected = summary.mean_round_expected_collisions.unwrap_or(f64::NAN);
        // factor-2 agreement as |log2(raw / expected)| <= 1
        out.push(Check::new(
            "dipe",
            format!("overlap {overlap}: log2(mean collisions / expected)"),
            (raw / expected).log2(),
            0.0,
            1.0,
            Relation::Within,
        ));
    }
    Ok(out)
}

pub const SCALING_TARGET_PAIRS: usize = 23;

/// Copies per pair divided by `sqrt(d/q)` at `d = 64`, one value per `q`.
pub fn scaling_ratios(seed: u64, trials: usize) -> Result<Vec<(usize, f64)>> {
    let mut g = dipe_grid(seed, 64, 4, trials);
    g.q = Axis::Many(vec![4, 16, 64]);
    g.target_pairs = Some(SCALING_TARGET_PAIRS);
    let mut out = Vec::new();
    for (i, p) in g.points()?.iter().enumerate() {
        let (_, s) = run_point(p, i)?;
        let per_pair = s.mean_copies_per_pair.unwrap_or(f64::NAN);
        out.push((p.q, per_pair / (64.0 / p.q as f64).sqrt()));
    }
    Ok(out)
}

pub fn scaling(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let ratios = scaling_ratios(seed, scaled(50, scale))?;
    let mut out: Vec<Check> = ratios
        .iter()
        .map(|&(q, r)| {
            Check::new("scaling", format!("q={q}: copies per pair / sqrt(d/q)"), r, r, 0.0, Relation::Within)
        })
        .collect();
    let hi = ratios.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    let lo = ratios.iter().map(|r| r.1).fold(f64::MAX, f64::min);
    out.push(Check::new("scaling", "max/min of normalized copies per pair", hi / lo, 2.0, 0.0, Relation::AtMost));
    Ok(out)
}

pub fn decision(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let trials = scaled(200, scale);
    let mut out = Vec::new();
    for (block, yes_min, no_min) in [(32usize, 1.0, 0.95), (16, 2.0 / 3.0, 2.0 / 3.0)] {
        let mut g = GridConfig::new(Experiment::Decision);
        g.seed = seed;
        g.d = Axis::One(32);
        g.q = Axis::One(block);
        g.trials = trials;
        g.target_pairs = Some(20);
        let (_, s) = run_point(&g.points()?[0], block)?;
        let yes = s.yes_accept_rate.unwrap_or(0.0);
        let no = s.no_reject_rate.unwrap_or(0.0);
        out.push(Check::new(
            "decision",
            format!("block={block} YES accept rate"),
            yes,
            yes_min,
            0.0,
            Relation::AtLeast,
        ));
        out.push(Check::new("decision", format!("block={block} NO reject rate"), no, no_min, 0.0, Relation::AtLeast));
    }
    Ok(out)
}

/// Referee and both clients on loopback threads.
pub fn loopback_run(cfg: &RefereeConfig) -> Result<RunSummary> {
    let (listener, addr) = bind("127.0.0.1:0")?;
    let addr = addr.to_string();
    let timeout = Duration::from_secs(10);
    let rcfg = cfg.clone();
    let referee = thread::spawn(move || referee_serve(&rcfg, &listener));
    let a = addr.clone();
    let alice = thread::spawn(move || alice_run(&a, timeout));
    let bob = bob_run(&addr, timeout);
    let summary = referee.join().map_err(|_| anyhow::anyhow!("referee thread panicked"))??;
    alice.join().map_err(|_| anyhow::anyhow!("alice thread panicked"))??;
    bob?;
    Ok(summary)
}

/// `<link> <in|out> <TYPE> <bytes>` per frame, timestamps dropped.
pub fn render_transcript(entries: &[TranscriptEntry]) -> String {
    entries
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

pub const GOLDEN_TRANSCRIPT: &str = include_str!("../../net/tests/golden/seed0_one_round.txt");

pub fn golden_config() -> RefereeConfig {
    let mut cfg = RefereeConfig::new(64, 16, 0);
    cfg.target_pairs = 1;
    cfg
}

pub fn net(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let seeds = scaled(20, scale) as u64;
    let mut mismatches = 0;
    for s in 0..seeds {
        let cfg = RefereeConfig::new(64, 16, seed.wrapping_add(s));
        let wire = loopback_run(&cfg)?;
        let local = in_process_estimate(&cfg)?;
        if wire.estimate.to_bits() != local.estimate.to_bits() || wire.ledger != local.ledger {
            mismatches += 1;
        }
    }
    let golden = render_transcript(&loopback_run(&golden_config())?.transcript);
    let same = if golden == GOLDEN_TRANSCRIPT { 1.0 } else { 0.0 };
    Ok(vec![
        Check::new(
            "net",
            format!("networked vs in-process mismatches over {seeds} seeds"),
            mismatches as f64,
            0.0,
            0.0,
            Relation::AtMost,
        ),
        Check::new("net", "seed-0 transcript equals golden", same, 1.0, 0.0, Relation::AtLeast),
    ])
}

pub fn run_suite(name: &str, seed: u64, scale: f64) -> Result<Vec<Check>> {
    match name {
        "haar" => haar(seed, scale),
        "povm" => povm(seed, scale),
        "truncation" => truncation(seed, scale),
        "gdipe-mean" => gdipe_mean(seed, scale),
        "gdipe-variance" => gdipe_variance(seed, scale),
        "gdipe-moments" => gdipe_moments(seed, scale),
        "dipe" => dipe(seed, scale),
        "scaling" => scaling(seed, scale),
        "decision" => decision(seed, scale),
        "net" => net(seed, scale),
        other => bail!("unknown suite {other:?}; expected one of {}", SUITES.join(", ")),
    }
}

pub fn verify(selector: &str, seed: u64, scale: f64) -> Result<Report> {
    if !(scale > 0.0) {
        bail!("scale must be positive");
    }
    let names: Vec<&str> =
        if selector == "all" { SUITES.iter().copied().filter(|s| *s != "all").collect() } else { vec![selector] };
    let mut checks = Vec::new();
    for n in names {
        checks.extend(run_suite(n, seed, scale)?);
    }
    Ok(Report { selector: selector.into(), seed, scale, pass: checks.iter().all(|c| c.pass), checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Check::new("x", "a", 1.05, 1.0, 0.1, Relation::Within).pass);
        assert!(!Check::new("x", "a", 0.85, 1.0, 0.1, Relation::Within).pass);
        assert!(Check::new("x", "a", -5.0, 1.0, 0.0, Relation::AtMost).pass);
        assert!(!Check::new("x", "a", 1.01, 1.0, 0.0, Relation::AtMost).pass);
        assert!(Check::new("x", "a", 1.0, 1.0, 0.0, Relation::AtLeast).pass);
        assert!(!Check::new("x", "a", f64::NAN, 1.0, 0.0, Relation::AtLeast).pass);
    }

    #[test]
    fn unknown_selector_fails() {
        assert!(verify("nope", 0, 1.0).is_err());
        assert!(verify("haar", 0, 0.0).is_err());
    }

    #[test]
    fn reduced_suites_run() {
        for s in ["haar", "truncation", "gdipe-variance"] {
            let r = verify(s, 1, 0.05).unwrap();
            assert!(r.pass, "{:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        }
    }
}
