use dpfair::audit::{estimate_privacy_ratio, exact_em_privacy_check, group_privacy_check, Z};
use dpfair::ef_em::{PreparedEf, DEFAULT_ENUMERATION_CAP as CAP};
use dpfair::generators::ef_packing_family;
use dpfair::oracles::exact_em_distribution;
use dpfair::{dp_moving_knife, PrivacyParams, RandomStream, UtilityProfile};

fn binary(rows: &[&[u8]]) -> UtilityProfile {
    UtilityProfile::binary(&rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn sampled_ef_allocator_matches_closed_form() {
    let p = binary(&[&[1, 0, 1, 1], &[0, 1, 1, 0]]);
    let params = PrivacyParams::new(1.0, 0.1).unwrap();
    let exact = exact_em_distribution(&p, &params, CAP).unwrap();
    let prepared = PreparedEf::new(&p, &params, CAP).unwrap();
    let runs = 1_000_000u64;
    let mut counts = vec![0u64; exact.candidates.len()];
    let mut s = RandomStream::new(11, 0);
    for _ in 0..runs {
        let a = prepared.sample(&mut s).unwrap().allocation;
        counts[exact.candidates.iter().position(|c| *c == a).unwrap()] += 1;
    }
    for (&count, &prob) in counts.iter().zip(&exact.probabilities) {
        let sigma = (prob * (1.0 - prob) / runs as f64).sqrt();
        let observed = count as f64 / runs as f64;
        assert!((observed - prob).abs() <= Z * sigma, "{observed} vs {prob}");
    }
}

#[test]
fn exact_group_privacy_on_a_random_pair_at_distance_three() {
    let p1 = binary(&[&[1, 0, 1, 0], &[0, 0, 1, 1]]);
    let p2 = p1.with_value(0, 1, 1).unwrap().with_value(1, 0, 1).unwrap().with_value(1, 3, 0).unwrap();
    for eps in [0.3, 1.0, 2.5] {
        let r = exact_em_privacy_check(&p1, &p2, &PrivacyParams::new(eps, 0.1).unwrap(), CAP).unwrap();
        assert!((r.bound_log - 3.0 * eps).abs() < 1e-12);
        assert!(r.passed(), "{:?}", r.flagged().collect::<Vec<_>>());
    }
}

#[test]
fn exact_group_privacy_on_a_packing_pair() {
    let family = ef_packing_family(3, 12, 1, 1).unwrap();
    let params = PrivacyParams::new(0.5, 0.1).unwrap();
    let r = exact_em_privacy_check(&family.base, &family.members[0], &params, CAP).unwrap();
    assert!((r.bound_log - 6.0 * 0.5).abs() < 1e-12);
    assert!(r.passed());
    assert!(r.max_log_ratio <= r.bound_log + 1e-9);
}

#[test]
fn sampled_group_audit_of_ef_allocator() {
    let p1 = binary(&[&[1, 1, 0], &[0, 1, 0]]);
    let p2 = p1.with_value(1, 2, 1).unwrap().with_value(0, 0, 0).unwrap();
    let params = PrivacyParams::new(1.0, 0.1).unwrap();
    let e1 = PreparedEf::new(&p1, &params, CAP).unwrap();
    let e2 = PreparedEf::new(&p2, &params, CAP).unwrap();
    let mech = |p: &UtilityProfile, s: &mut RandomStream| {
        Ok(if *p == p1 { &e1 } else { &e2 }.sample(s)?.allocation)
    };
    let r = group_privacy_check(mech, &p1, &p2, 1.0, 100_000, &RandomStream::from_seed(12)).unwrap();
    assert!((r.bound_log - 2.0).abs() < 1e-12);
    assert!(r.passed());
}

#[test]
fn sampled_knife_audit_on_adjacent_pair() {
    let p1 = binary(&[&[1, 0, 1, 1], &[1, 1, 0, 1]]);
    let p2 = p1.with_value(0, 1, 1).unwrap();
    // A small accuracy constant keeps the knife positions input-dependent.
    let params = PrivacyParams::with_svt_constant(2.0, 0.1, 0.05).unwrap();
    let mech = |p: &UtilityProfile, s: &mut RandomStream| Ok(dp_moving_knife(p, &params, s)?.0);
    let r = estimate_privacy_ratio(mech, &p1, &p2, 2.0, 100_000, &RandomStream::from_seed(13)).unwrap();
    assert!(r.outcomes.len() > 1);
    assert!(r.passed(), "{:?}", r.flagged().collect::<Vec<_>>());
}
