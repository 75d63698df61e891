use dipe_core::dipe::{
    expected_collisions, make_partition, measure_round, project_copies, raw_collisions, run_dipe_eps, streams,
    EpsilonParams,
};
use dipe_core::gdipe::{conditional_mean, GdipeInstance};
use dipe_core::oracles::{gen_dipe_instance, gen_ip_decision_instance, planted_pair, Label};
use dipe_core::qmath::{haar_state, overlap, random_observable};
use dipe_core::rng::label;
use dipe_core::sampling::{swap_accept_probability, swap_test};
use dipe_core::spectral::truncate;
use dipe_core::stats::{ks_distance, Moments};
use dipe_core::StreamFactory;

#[test]
fn block_frequencies_match_born_probabilities() {
    let mut rng = StreamFactory::new(100).rng();
    let partition = make_partition(64, 16, &mut rng).unwrap();
    let s = haar_state(64, &mut rng).unwrap();
    let weights = partition.weights(&s).unwrap();
    let n = 20_000;
    let recs = project_copies(&s, n, &partition, &mut rng).unwrap();
    for (i, &p) in weights.iter().enumerate() {
        let f = recs.iter().filter(|r| r.block_index == i).count() as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * sigma, "block {i}: {f} vs {p}");
    }
}

#[test]
fn mean_expected_collisions_is_near_k_squared_q_over_d() {
    let root = StreamFactory::new(101);
    let mut rng = root.child(label::STATES).rng();
    let psi = haar_state(64, &mut rng).unwrap();
    let phi = haar_state(64, &mut rng).unwrap();
    let mean: Moments = (0..1000)
        .map(|i| {
            let p = make_partition(64, 16, &mut root.path(&[label::PARTITION, i]).rng()).unwrap();
            expected_collisions(&psi, &phi, &p, 10).unwrap()
        })
        .collect();
    assert!((mean.mean() - 25.0).abs() < 2.5, "{}", mean.mean());
}

#[test]
fn raw_collisions_track_the_oracle() {
    let root = StreamFactory::new(102);
    let mut rng = root.child(label::STATES).rng();
    let psi = haar_state(64, &mut rng).unwrap();
    let phi = haar_state(64, &mut rng).unwrap();
    let (mut seen, mut expected) = (Moments::new(), Moments::new());
    for round in 0..500 {
        let out = measure_round(&psi, &phi, 16, 10, &root, round).unwrap();
        seen.push(raw_collisions(&out.alice_blocks, &out.bob_blocks, out.partition.num_blocks()) as f64);
        expected.push(expected_collisions(&psi, &phi, &out.partition, 10).unwrap());
    }
    let ratio = seen.mean() / expected.mean();
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    assert!((seen.mean() - expected.mean()).abs() <= 4.0 * seen.std_error());
}

#[test]
fn swap_success_rate_matches_per_pair_oracle() {
    let root = StreamFactory::new(103);
    let mut rng = root.child(label::STATES).rng();
    let psi = haar_state(64, &mut rng).unwrap();
    let phi = haar_state(64, &mut rng).unwrap();
    let out = measure_round(&psi, &phi, 16, 40, &root, 0).unwrap();
    let block = *out.alice_blocks.iter().find(|b| out.bob_blocks.contains(b)).unwrap();
    let (a, b) = (out.alice_post(block).unwrap(), out.bob_post(block).unwrap());
    let p = swap_accept_probability(a, b).unwrap();
    let n = 40_000;
    let mut swap_rng = streams::swap(&root, 0, 0).rng();
    let hits = (0..n).filter(|_| swap_test(a, b, &mut swap_rng).unwrap() == 0).count() as f64 / n as f64;
    assert!((hits - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt());
}

#[test]
fn projected_overlaps_concentrate() {
    // fraction of blocks whose projected overlap moves by more than 16 * Delta
    let root = StreamFactory::new(104);
    let mut rng = root.child(label::STATES).rng();
    let (psi, phi) = planted_pair(64, 0.5, &mut rng).unwrap();
    let delta = 0.75;
    let (mut bad, mut total) = (0usize, 0usize);
    for i in 0..500 {
        let p = make_partition(64, 16, &mut root.path(&[label::PARTITION, i]).rng()).unwrap();
        for b in p.blocks() {
            let pa = dipe_core::PureState::normalize(b.apply(psi.amplitudes())).unwrap();
            let pb = dipe_core::PureState::normalize(b.apply(phi.amplitudes())).unwrap();
            let o = overlap(&pa, &pb).unwrap().norm_sqr();
            total += 1;
            if (o - 0.5).abs() > 16.0 * delta {
                bad += 1;
            }
        }
    }
    let bound = (64.0 / 16.0) * (-(delta * delta) * 16.0 / 16.0f64).exp();
    assert!(bad as f64 / total as f64 <= bound);
}

#[test]
fn no_instances_have_overlap_one_over_d() {
    let mut rng = StreamFactory::new(105).rng();
    let m: Moments = (0..10_000)
        .map(|_| {
            let i = gen_dipe_instance(6, Label::No, &mut rng).unwrap();
            overlap(&i.psi, &i.phi).unwrap().norm_sqr()
        })
        .collect();
    assert!((m.mean() - 1.0 / 6.0).abs() <= 3.0 * m.std_error());

    let xs: Vec<f64> = (0..10_000)
        .map(|_| {
            let i = gen_dipe_instance(2, Label::No, &mut rng).unwrap();
            overlap(&i.psi, &i.phi).unwrap().norm_sqr()
        })
        .collect();
    assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.02);
}

#[test]
fn ip_decision_no_overlap_mean() {
    let mut rng = StreamFactory::new(106).rng();
    let (d, e) = (32, 0.2);
    let m: Moments = (0..10_000)
        .map(|_| {
            let i = gen_ip_decision_instance(d, e, Label::No, &mut rng).unwrap();
            overlap(&i.psi, &i.phi).unwrap().norm_sqr()
        })
        .collect();
    let expect = (1.0 - e) * (1.0 - e) + e * e / (d as f64 - 1.0);
    assert!((m.mean() - expect).abs() <= 3.0 * m.std_error(), "{} vs {expect}", m.mean());
}

#[test]
fn conditional_mean_matches_conditioned_sampler() {
    let root = StreamFactory::new(107);
    let mut rng = root.rng();
    // find an instance with d_eps = 6 at d = 8
    let (t, psi, phi) = loop {
        let m = random_observable(8, &mut rng).unwrap();
        let t = truncate(&m, 0.5).unwrap();
        if t.d_eps() == 6 {
            break (t, haar_state(8, &mut rng).unwrap(), haar_state(8, &mut rng).unwrap());
        }
    };
    let inst = GdipeInstance::new(&t, &psi, &phi).unwrap();
    let (k, s_a, s_b) = (8, 3, 5);
    let mc: Moments = (0..100_000).map(|_| inst.sample_given(k, s_a, s_b, &mut rng).w).collect();
    let closed = conditional_mean(&t, &psi, &phi, k, s_a, s_b).unwrap();
    assert!((mc.mean() - closed).abs() <= 3.0 * mc.std_error(), "{} vs {closed}", mc.mean());
}

#[test]
fn planted_half_overlap_at_accuracy_quarter() {
    // block 32 sits below log2(64) / eps^2 = 96, so the block constant is relaxed
    let params = EpsilonParams { block_constant: 1.0 / 3.0, ..EpsilonParams::default() };
    let root = StreamFactory::new(108);
    let mut good = 0;
    let runs = 200;
    for i in 0..runs {
        let trial = root.path(&[label::TRIAL, i]);
        let (psi, phi) = planted_pair(64, 0.5, &mut trial.child(label::STATES).rng()).unwrap();
        let est = run_dipe_eps(&psi, &phi, 32, 0.25, &params, &trial.child(label::PROTOCOL)).unwrap();
        if (est.estimate - 0.5).abs() <= 0.25 {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.9 * runs as f64, "{good}/{runs}");
}
