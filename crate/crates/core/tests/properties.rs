use dipe_core::dipe::{greedy_pairing, make_partition, pair_collisions, project_copies, run_dipe, DipeParams};
use dipe_core::qmath::{haar_state, random_observable, PureState};
use dipe_core::rng::label;
use dipe_core::sampling::{standard_povm_sample, swap_accept_probability};
use dipe_core::spectral::{truncate, truncation_gap};
use dipe_core::StreamFactory;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_gap_never_exceeds_half_epsilon(seed in any::<u64>(), d in 1usize..10, eps in 0.01f64..2.0) {
        let mut rng = StreamFactory::new(seed).rng();
        let m = random_observable(d, &mut rng).unwrap();
        let t = truncate(&m, eps).unwrap();
        let a = haar_state(d, &mut rng).unwrap();
        let b = haar_state(d, &mut rng).unwrap();
        prop_assert!(truncation_gap(&m, &t, &a, &b).unwrap() <= eps / 2.0 + 1e-9);
        prop_assert_eq!(t.d_eps() + t.discarded_eigenvalues().len(), d);
    }

    #[test]
    fn pairing_uses_each_copy_once_within_one_block(
        alice in proptest::collection::vec(0usize..4, 0..30),
        bob in proptest::collection::vec(0usize..4, 0..30),
        cap in 0usize..40,
    ) {
        let pairs = greedy_pairing(&alice, &bob, cap, |_| true);
        prop_assert!(pairs.len() <= cap);
        let mut seen_a = std::collections::HashSet::new();
        let mut seen_b = std::collections::HashSet::new();
        for p in &pairs {
            prop_assert!(seen_a.insert(p.alice));
            prop_assert!(seen_b.insert(p.bob));
            prop_assert_eq!(alice[p.alice], p.block);
            prop_assert_eq!(bob[p.bob], p.block);
        }
        // greedy pairing is maximal when uncapped
        if cap >= alice.len() {
            let expected: usize = (0..4)
                .map(|b| alice.iter().filter(|&&x| x == b).count().min(bob.iter().filter(|&&x| x == b).count()))
                .sum();
            prop_assert_eq!(pairs.len(), expected);
        }
        prop_assert_eq!(greedy_pairing(&alice, &bob, cap, |_| true), pairs);
    }

    #[test]
    fn povm_outcomes_stay_in_the_subspace(seed in any::<u64>(), d in 2usize..9, copies in 0usize..6) {
        let mut rng = StreamFactory::new(seed).rng();
        let partition = make_partition(d, d.div_ceil(2), &mut rng).unwrap();
        let p = &partition.blocks()[0];
        let s = haar_state(d, &mut rng).unwrap();
        let cond = PureState::normalize(p.apply(s.amplitudes())).unwrap();
        let out = standard_povm_sample(&cond, p, copies, &mut rng).unwrap();
        prop_assert!(p.residual(&out.outcome_state).unwrap() < 1e-9);
        prop_assert!(out.reconstruction_error(&cond) < 1e-9);
        prop_assert!((0.0..=1.0).contains(&out.alpha_sq));
    }

    #[test]
    fn projections_land_in_their_blocks(seed in any::<u64>(), d in 2usize..12, count in 1usize..20) {
        let mut rng = StreamFactory::new(seed).rng();
        let block = 1 + (seed as usize % d);
        let partition = make_partition(d, block, &mut rng).unwrap();
        let s = haar_state(d, &mut rng).unwrap();
        for r in project_copies(&s, count, &partition, &mut rng).unwrap() {
            prop_assert!(partition.blocks()[r.block_index].residual(&r.post_state).unwrap() < 1e-9);
        }
    }

    #[test]
    fn swap_probability_is_symmetric(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = StreamFactory::new(seed).rng();
        let a = haar_state(d, &mut rng).unwrap();
        let b = haar_state(d, &mut rng).unwrap();
        let p = swap_accept_probability(&a, &b).unwrap();
        prop_assert!((p - swap_accept_probability(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!((0.5..=1.0).contains(&p));
    }

    #[test]
    fn dipe_estimates_are_bounded_and_ledgers_monotone(seed in any::<u64>(), target in 1usize..12) {
        let root = StreamFactory::new(seed);
        let mut rng = root.child(label::STATES).rng();
        let psi = haar_state(16, &mut rng).unwrap();
        let phi = haar_state(16, &mut rng).unwrap();
        let params = DipeParams { target_pairs: target, ..DipeParams::default() };
        let est = run_dipe(&psi, &phi, 4, &params, &root).unwrap();
        prop_assert_eq!(est.m, target);
        prop_assert!(est.s <= est.m);
        prop_assert!((-1.0..=1.0).contains(&est.estimate));
        prop_assert_eq!(est.rounds.iter().map(|r| r.pairs).sum::<usize>(), est.m);
        prop_assert_eq!(est.rounds.iter().map(|r| r.successes).sum::<usize>(), est.s);
        prop_assert!(est.rounds.iter().all(|r| r.pairs <= r.collisions));
    }
}

#[test]
fn pairing_is_a_pure_function_of_records() {
    let mut rng = StreamFactory::new(5).rng();
    let partition = make_partition(12, 3, &mut rng).unwrap();
    let s = haar_state(12, &mut rng).unwrap();
    let a = project_copies(&s, 10, &partition, &mut rng).unwrap();
    let b = project_copies(&s, 10, &partition, &mut rng).unwrap();
    assert_eq!(pair_collisions(&a, &b, 5), pair_collisions(&a, &b, 5));
}
