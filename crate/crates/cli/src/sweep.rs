//! Grid sweeps: one [`TrialRecord`] per trial and a summary per grid point.
//!
//! Trial `i` of grid point `g` draws from `seed/<experiment>/GRID/g/TRIAL/i`
//! (decision trials add a YES/NO label before `i`), so results do not depend
//! on which worker runs which trial.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use dipe_core::dipe::{run_dipe, run_dipe_eps, DipeEstimate, DipeParams, EpsilonParams};
use dipe_core::gdipe::{estimator_mean_closed_form, run_gdipe};
use dipe_core::oracles::{gen_dipe_instance, instance_overlap, planted_pair, Label, ACCEPT_THRESHOLD};
use dipe_core::qmath::{haar_state, haar_unitary, overlap, random_observable};
use dipe_core::rng::label;
use dipe_core::spectral::truncate;
use dipe_core::stats::Moments;
use dipe_core::{HermitianObservable, PureState, StreamFactory};

use crate::config::{Experiment, ExperimentConfig, GridConfig};
use crate::record::{write_csv, TrialRecord};

pub fn point_root(cfg: &ExperimentConfig, grid: usize) -> StreamFactory {
    StreamFactory::new(cfg.seed).path(&[cfg.experiment.stream_label(), label::GRID, grid as u64])
}

pub fn trial_stream(cfg: &ExperimentConfig, grid: usize, trial: usize) -> StreamFactory {
    point_root(cfg, grid).path(&[label::TRIAL, trial as u64])
}

/// Extra per-trial quantities that feed the summary but not the CSV.
#[derive(Debug, Clone, Default)]
struct Extra {
    collisions: Option<(f64, f64, usize)>,
    closed_form_mean: Option<f64>,
    d_eps: Option<usize>,
    label: Option<Label>,
}

pub fn dipe_states(cfg: &ExperimentConfig, stream: &StreamFactory) -> Result<(PureState, PureState)> {
    let mut rng = stream.child(label::STATES).rng();
    if cfg.overlap == 1.0 {
        let psi = haar_state(cfg.d, &mut rng)?;
        return Ok((psi.clone(), psi));
    }
    Ok(planted_pair(cfg.d, cfg.overlap, &mut rng)?)
}

pub fn dipe_run(
    cfg: &ExperimentConfig,
    psi: &PureState,
    phi: &PureState,
    root: &StreamFactory,
) -> Result<DipeEstimate> {
    let c = &cfg.constants;
    Ok(match cfg.target_pairs {
        Some(target_pairs) => {
            let params = DipeParams { copies_constant: c.c, target_pairs, max_rounds: cfg.max_rounds };
            run_dipe(psi, phi, cfg.q, &params, root)?
        }
        None => {
            let params = EpsilonParams {
                pairs_constant: c.c2,
                block_constant: c.c3,
                copies_constant: c.c,
                max_rounds: cfg.max_rounds,
            };
            run_dipe_eps(psi, phi, cfg.q, cfg.epsilon, &params, root)?
        }
    })
}

fn dipe_record(
    cfg: &ExperimentConfig,
    grid: usize,
    trial: usize,
    psi: &PureState,
    phi: &PureState,
    est: &DipeEstimate,
) -> Result<TrialRecord> {
    let truth = overlap(psi, phi)?.norm_sqr();
    Ok(TrialRecord {
        experiment: format!("{}:{grid}", cfg.experiment.name()),
        grid,
        trial,
        d: cfg.d,
        q: Some(cfg.q),
        k: est.rounds.first().map_or(0, |r| r.copies_per_side),
        epsilon: cfg.epsilon,
        true_value: truth,
        estimate: est.estimate,
        abs_error: (est.estimate - truth).abs(),
        s: Some(est.s),
        m: Some(est.m),
        s_a: None,
        s_b: None,
        copies_used: est.ledger.copies_used(),
        qubit_equivalents: Some(est.ledger.qubit_equivalents()),
        classical_bits: Some(est.ledger.classical_bits),
        seed: cfg.seed,
    })
}

fn collision_extra(est: &DipeEstimate) -> Option<(f64, f64, usize)> {
    let raw: f64 = est.rounds.iter().map(|r| r.collisions as f64).sum();
    let expected: f64 = est.rounds.iter().map(|r| r.expected_collisions).sum();
    Some((raw, expected, est.rounds.len()))
}

fn dipe_trial(cfg: &ExperimentConfig, grid: usize, trial: usize) -> Result<(TrialRecord, Extra)> {
    let stream = trial_stream(cfg, grid, trial);
    let (psi, phi) = dipe_states(cfg, &stream)?;
    let est = dipe_run(cfg, &psi, &phi, &stream.child(label::PROTOCOL))?;
    let extra = Extra { collisions: collision_extra(&est), ..Extra::default() };
    Ok((dipe_record(cfg, grid, trial, &psi, &phi, &est)?, extra))
}

/// `U diag(lambda) U^dagger` with exactly `d_eps` eigenvalues of magnitude at
/// least `epsilon / 2` (one of them `+-1`) and the rest strictly below it.
pub fn observable_with_support<R: Rng + ?Sized>(
    d: usize,
    d_eps: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<HermitianObservable> {
    let u = haar_unitary(d, rng)?;
    let half = epsilon / 2.0;
    let values: Vec<f64> = (0..d)
        .map(|i| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag = match i {
                0 => 1.0,
                i if i < d_eps => rng.random_range(half..=1.0),
                _ => rng.random_range(0.0..0.9 * half),
            };
            sign * mag
        })
        .collect();
    Ok(HermitianObservable::from_spectrum(&values, &u)?)
}

fn gdipe_trial(cfg: &ExperimentConfig, grid: usize, trial: usize) -> Result<(TrialRecord, Extra)> {
    let stream = trial_stream(cfg, grid, trial);
    let mut rng = stream.child(label::INSTANCE).rng();
    let m = match cfg.d_eps {
        Some(de) => observable_with_support(cfg.d, de, cfg.epsilon, &mut rng)?,
        None => random_observable(cfg.d, &mut rng)?,
    };
    let psi = haar_state(cfg.d, &mut rng)?;
    let phi = haar_state(cfg.d, &mut rng)?;
    let trunc = truncate(&m, cfg.epsilon)?;
    let out = run_gdipe(&trunc, &psi, &phi, cfg.k, &mut stream.child(label::PROTOCOL).rng())?;
    let truth = trunc.bilinear(&phi, &psi)?.norm_sqr();
    let record = TrialRecord {
        experiment: format!("gdipe:{grid}"),
        grid,
        trial,
        d: cfg.d,
        q: None,
        k: cfg.k,
        epsilon: cfg.epsilon,
        true_value: truth,
        estimate: out.w,
        abs_error: (out.w - truth).abs(),
        s: None,
        m: None,
        s_a: Some(out.s_a),
        s_b: Some(out.s_b),
        copies_used: 2 * cfg.k as u64,
        qubit_equivalents: None,
        classical_bits: None,
        seed: cfg.seed,
    };
    let extra = Extra {
        closed_form_mean: Some(estimator_mean_closed_form(&trunc, &psi, &phi, cfg.k)?),
        d_eps: Some(trunc.d_eps()),
        ..Extra::default()
    };
    Ok((record, extra))
}

/// Trials `0..n` are YES instances and `n..2n` NO instances; the streams are
/// those of [`dipe_core::oracles::decision_experiment`] under [`point_root`].
fn decision_trial(cfg: &ExperimentConfig, grid: usize, trial: usize) -> Result<(TrialRecord, Extra)> {
    let (li, i) = (trial / cfg.trials, trial % cfg.trials);
    let lab = if li == 0 { Label::Yes } else { Label::No };
    let base = point_root(cfg, grid).path(&[label::TRIAL, li as u64, i as u64]);
    let inst = gen_dipe_instance(cfg.d, lab, &mut base.child(label::INSTANCE).rng())?;
    let est = dipe_run(cfg, &inst.psi, &inst.phi, &base.child(label::PROTOCOL))?;
    let mut record = dipe_record(cfg, grid, trial, &inst.psi, &inst.phi, &est)?;
    record.true_value = instance_overlap(&inst)?;
    record.abs_error = (est.estimate - record.true_value).abs();
    let extra = Extra { collisions: collision_extra(&est), label: Some(lab), ..Extra::default() };
    Ok((record, extra))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub grid: usize,
    pub config: ExperimentConfig,
    pub trials: usize,
    pub mean_estimate: f64,
    pub estimate_std_error: f64,
    pub mean_abs_error: f64,
    pub abs_error_std_error: f64,
    /// A trial succeeds when `abs_error <= success_threshold` (= epsilon).
    pub success_threshold: f64,
    pub success_rate: f64,
    pub success_std_error: f64,
    /// Trials that ended without a single pair.
    pub no_pair_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_copies_per_pair: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_round_collisions: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_round_expected_collisions: Option<f64>,
    /// Mean of `|E[w] - f|` over instances, exact per instance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_d_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yes_accept_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_reject_rate: Option<f64>,
}

fn summarize(cfg: &ExperimentConfig, grid: usize, rows: &[(TrialRecord, Extra)]) -> PointSummary {
    let finite: Vec<&TrialRecord> = rows.iter().map(|(r, _)| r).filter(|r| r.estimate.is_finite()).collect();
    let est: Moments = finite.iter().map(|r| r.estimate).collect();
    let err: Moments = finite.iter().map(|r| r.abs_error).collect();
    let hit: Moments = rows.iter().map(|(r, _)| if r.abs_error <= cfg.epsilon { 1.0 } else { 0.0 }).collect();
    let mut s = PointSummary {
        grid,
        config: cfg.clone(),
        trials: rows.len(),
        mean_estimate: est.mean(),
        estimate_std_error: est.std_error(),
        mean_abs_error: err.mean(),
        abs_error_std_error: err.std_error(),
        success_threshold: cfg.epsilon,
        success_rate: hit.mean(),
        success_std_error: hit.std_error(),
        no_pair_trials: rows.len() - finite.len(),
        mean_copies_per_pair: None,
        mean_round_collisions: None,
        mean_round_expected_collisions: None,
        mean_bias: None,
        max_bias: None,
        mean_d_eps: None,
        yes_accept_rate: None,
        no_reject_rate: None,
    };
    let colls: Vec<(f64, f64, usize)> = rows.iter().filter_map(|(_, e)| e.collisions).collect();
    if !colls.is_empty() {
        let rounds: usize = colls.iter().map(|c| c.2).sum::<usize>().max(1);
        s.mean_round_collisions = Some(colls.iter().map(|c| c.0).sum::<f64>() / rounds as f64);
        s.mean_round_expected_collisions = Some(colls.iter().map(|c| c.1).sum::<f64>() / rounds as f64);
        let per_pair: Moments = rows
            .iter()
            .filter(|(r, _)| r.m.unwrap_or(0) > 0)
            .map(|(r, _)| r.copies_used as f64 / r.m.unwrap_or(1) as f64)
            .collect();
        s.mean_copies_per_pair = Some(per_pair.mean());
    }
    let biases: Vec<f64> =
        rows.iter().filter_map(|(r, e)| e.closed_form_mean.map(|c| (c - r.true_value).abs())).collect();
    if !biases.is_empty() {
        s.mean_bias = Some(biases.iter().sum::<f64>() / biases.len() as f64);
        s.max_bias = Some(biases.iter().cloned().fold(0.0, f64::max));
        let de: Vec<f64> = rows.iter().filter_map(|(_, e)| e.d_eps.map(|x| x as f64)).collect();
        s.mean_d_eps = Some(de.iter().sum::<f64>() / de.len() as f64);
    }
    if cfg.experiment == Experiment::Decision {
        let rate = |lab: Label| {
            let v: Vec<bool> = rows
                .iter()
                .filter(|(_, e)| e.label == Some(lab))
                .map(|(r, _)| r.estimate >= ACCEPT_THRESHOLD)
                .collect();
            v.iter().filter(|&&a| a).count() as f64 / v.len().max(1) as f64
        };
        s.yes_accept_rate = Some(rate(Label::Yes));
        s.no_reject_rate = Some(1.0 - rate(Label::No));
    }
    s
}

type TrialFn = fn(&ExperimentConfig, usize, usize) -> Result<(TrialRecord, Extra)>;

pub fn run_point(cfg: &ExperimentConfig, grid: usize) -> Result<(Vec<TrialRecord>, PointSummary)> {
    cfg.validate()?;
    let (trial_fn, n): (TrialFn, usize) = match cfg.experiment {
        Experiment::Dipe => (dipe_trial, cfg.trials),
        Experiment::Gdipe => (gdipe_trial, cfg.trials),
        Experiment::Decision => (decision_trial, 2 * cfg.trials),
        e => bail!("{} is not a sweep experiment", e.name()),
    };
    let rows: Vec<(TrialRecord, Extra)> = (0..n)
        .into_par_iter()
        .map(|i| trial_fn(cfg, grid, i).with_context(|| format!("grid point {grid}, trial {i}")))
        .collect::<Result<_>>()?;
    let summary = summarize(cfg, grid, &rows);
    Ok((rows.into_iter().map(|(r, _)| r).collect(), summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub experiment: Experiment,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub points: Vec<PointSummary>,
}

pub fn run_sweep(grid: &GridConfig) -> Result<SweepOutput> {
    let mut records = Vec::new();
    let mut points = Vec::new();
    for (g, cfg) in grid.points()?.iter().enumerate() {
        let (r, s) = run_point(cfg, g)?;
        records.extend(r);
        points.push(s);
    }
    records.sort_by_key(|r| (r.grid, r.trial));
    Ok(SweepOutput { experiment: grid.experiment, records, points })
}

/// Env var naming the default output directory.
pub const OUT_DIR_ENV: &str = "DIPE_OUT_DIR";

/// `--out`, then the config's `output`, then `$DIPE_OUT_DIR/<experiment>.csv`.
pub fn csv_path(explicit: Option<&Path>, grid: &GridConfig) -> PathBuf {
    if let Some(p) = explicit.or(grid.output.as_deref()) {
        return p.to_path_buf();
    }
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{}.csv", grid.experiment.name()))
}

/// Write the CSV and a JSON summary next to it (same stem, `.json`).
pub fn write_outputs(out: &SweepOutput, csv: &Path) -> Result<PathBuf> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.records, stamp)?;
    fs::write(csv, buf).with_context(|| format!("writing {}", csv.display()))?;
    let json = csv.with_extension("json");
    fs::write(&json, serde_json::to_string_pretty(out)? + "\n")
        .with_context(|| format!("writing {}", json.display()))?;
    Ok(json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Axis;
    use dipe_core::dipe::DipeParams;
    use dipe_core::oracles::{decision_experiment, DecisionProtocol};

    #[test]
    fn identical_states_give_a_single_exact_row() {
        let mut g = GridConfig::new(Experiment::Dipe);
        g.d = Axis::One(8);
        g.q = Axis::One(4);
        g.overlap = Axis::One(1.0);
        g.target_pairs = Some(20);
        g.trials = 1;
        let out = run_sweep(&g).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.estimate, 1.0);
        assert!(r.abs_error < 1e-12);
        assert_eq!(r.m, Some(20));
    }

    #[test]
    fn decision_rates_match_the_oracle_experiment() {
        let mut g = GridConfig::new(Experiment::Decision);
        g.d = Axis::One(16);
        g.q = Axis::One(8);
        g.trials = 12;
        g.seed = 3;
        g.target_pairs = Some(20);
        let out = run_sweep(&g).unwrap();
        let p = &out.points[0];
        let cfg = &g.points().unwrap()[0];
        let rates = decision_experiment(&DecisionProtocol::Dipe(DipeParams::default()), 16, 8, 12, &point_root(cfg, 0))
            .unwrap();
        assert_eq!(p.yes_accept_rate, Some(rates.yes_accept_rate));
        assert_eq!(p.no_reject_rate, Some(rates.no_reject_rate));
        assert_eq!(out.records.len(), 24);
    }

    #[test]
    fn gdipe_bias_stays_below_two_over_k() {
        let mut g = GridConfig::new(Experiment::Gdipe);
        g.d = Axis::One(8);
        g.d_eps = Some(Axis::One(8));
        g.k = Axis::Many(vec![10, 40, 160]);
        g.trials = 20;
        let out = run_sweep(&g).unwrap();
        for p in &out.points {
            assert_eq!(p.mean_d_eps, Some(8.0));
            assert!(p.max_bias.unwrap() <= 2.0 / p.config.k as f64);
        }
        let b: Vec<f64> = out.points.iter().map(|p| p.mean_bias.unwrap()).collect();
        assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
    }

    #[test]
    fn support_dimension_is_exact() {
        let mut rng = StreamFactory::new(2).rng();
        for de in 1..=6 {
            let m = observable_with_support(6, de, 0.4, &mut rng).unwrap();
            assert_eq!(truncate(&m, 0.4).unwrap().d_eps(), de);
        }
    }

    #[test]
    fn epsilon_mode_enforces_the_block_requirement() {
        let mut g = GridConfig::new(Experiment::Dipe);
        g.constants.c3 = 1.0;
        g.epsilon = Axis::One(0.5);
        g.d = Axis::One(16);
        g.q = Axis::One(8);
        g.trials = 1;
        assert!(run_sweep(&g).is_err());
        g.q = Axis::One(16);
        let out = run_sweep(&g).unwrap();
        assert_eq!(out.records[0].m, Some(8));
    }

    #[test]
    fn unwritable_output_is_an_error() {
        let out = SweepOutput { experiment: Experiment::Dipe, records: vec![], points: vec![] };
        assert!(write_outputs(&out, Path::new("/proc/definitely/not/here.csv")).is_err());
    }

    #[test]
    fn trials_depend_only_on_their_index() {
        let mut g = GridConfig::new(Experiment::Dipe);
        g.d = Axis::One(16);
        g.q = Axis::One(4);
        g.trials = 6;
        let cfg = g.points().unwrap().remove(0);
        let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        let one = pool(1).install(|| run_point(&cfg, 0).unwrap().0);
        let four = pool(4).install(|| run_point(&cfg, 0).unwrap().0);
        assert_eq!(one, four);
        let mut short = cfg.clone();
        short.trials = 3;
        assert_eq!(run_point(&short, 0).unwrap().0[..], one[..3]);
    }
}
