use dpfair::ef_em::DEFAULT_ENUMERATION_CAP as CAP;
use dpfair::oracles::{
    audit_f_sensitivity, audit_score_sensitivity, ef2_connected_exists, exact_em_distribution, min_ef_c_connected,
    min_prop_c_connected,
};
use dpfair::{PrivacyParams, RandomStream, UtilityProfile};
use proptest::prelude::*;

fn profile_strategy(max_n: usize, max_m: usize) -> impl Strategy<Value = UtilityProfile> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        proptest::collection::vec(proptest::collection::vec(0u64..20, m), n)
            .prop_map(|values| UtilityProfile::additive(4, values).unwrap())
    })
}

proptest! {
    #[test]
    fn best_fairness_chain(p in profile_strategy(4, 6)) {
        let ef = min_ef_c_connected(&p, CAP).unwrap();
        let prop = min_prop_c_connected(&p, CAP).unwrap().unwrap();
        prop_assert!(prop <= ef);
        prop_assert!(ef <= 2);
    }

    #[test]
    fn exact_distribution_is_a_distribution(p in profile_strategy(3, 5), eps in 0.05f64..8.0) {
        let d = exact_em_distribution(&p, &PrivacyParams::new(eps, 0.1).unwrap(), CAP).unwrap();
        prop_assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.probabilities.iter().all(|&q| q > 0.0));
    }
}

#[test]
fn connected_ef2_exists_on_random_instances() {
    let mut s = RandomStream::from_seed(21);
    for _ in 0..10_000 {
        let values = (0..3).map(|_| (0..6).map(|_| s.below(10)).collect()).collect();
        let p = UtilityProfile::additive(1, values).unwrap();
        assert!(ef2_connected_exists(&p, CAP).unwrap(), "{p:?}");
    }
}

#[test]
fn score_sensitivity_is_one() {
    for (m, n, g) in [(3, 2, 1), (3, 2, 2), (3, 2, 3), (4, 2, 3), (2, 3, 4), (2, 4, 2), (8, 1, 5)] {
        let r = audit_score_sensitivity(m, n, g).unwrap();
        assert!(r.max_delta <= 1, "m={m} n={n} g={g}: {r:?}");
        assert_eq!(r.pairs_examined, (n * m) << (n * m - 1));
    }
}

#[test]
fn knife_score_sensitivity_is_one() {
    for (m, n, g) in [(3, 2, 2), (3, 2, 4), (4, 2, 4), (2, 4, 8), (8, 1, 3)] {
        let r = audit_f_sensitivity(m, n, g).unwrap();
        assert!(r.max_delta <= 1, "m={m} n={n} g={g}: {r:?}");
    }
}

#[test]
fn oversized_universes_are_refused() {
    assert!(audit_score_sensitivity(3, 3, 2).is_err());
    assert!(audit_f_sensitivity(9, 1, 2).is_err());
}

fn changed_cell_strategy() -> impl Strategy<Value = (UtilityProfile, UtilityProfile, u64)> {
    (2usize..=4, 6usize..=12, 1u64..=5).prop_flat_map(|(n, m, g)| {
        (
            proptest::collection::vec(proptest::collection::vec(0u64..6, m), n),
            0..n,
            0..m,
            0u64..6,
            Just(g),
        )
            .prop_map(|(values, i, j, v, g)| {
                let p = UtilityProfile::additive(5, values).unwrap();
                let q = p.with_value(i, j, v).unwrap();
                (p, q, g)
            })
    })
}

proptest! {
    // Exhaustive universes stay small enough that most scores are -1, so
    // larger random instances exercise the bound where scores do move.
    #[test]
    fn score_moves_by_at_most_one((p, q, g) in changed_cell_strategy()) {
        for a in dpfair::enumerate_connected_allocations(p.m(), p.n()).step_by(7) {
            let (x, y) = (dpfair::score(&p, &a, g).unwrap(), dpfair::score(&q, &a, g).unwrap());
            prop_assert!((x - y).abs() <= 1, "{x} vs {y}");
        }
    }
}

#[test]
fn scores_do_move_on_larger_instances() {
    let mut s = RandomStream::from_seed(22);
    let mut moved = false;
    for _ in 0..200 {
        let p = dpfair::generators::bernoulli_profile(2, 10, &mut s).unwrap();
        let (i, j) = (s.below(2) as usize, s.below(10) as usize);
        let q = p.with_value(i, j, 1 - p.row(i)[j]).unwrap();
        for a in dpfair::enumerate_connected_allocations(10, 2) {
            let (x, y) = (dpfair::score(&p, &a, 2).unwrap(), dpfair::score(&q, &a, 2).unwrap());
            assert!((x - y).abs() <= 1);
            moved |= x != y;
        }
    }
    assert!(moved);
}
