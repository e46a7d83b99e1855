use dpfair::audit::{anti_concentration_check, fairness_failure_rate, CoinTail};
use dpfair::ef_em::{PreparedEf, DEFAULT_ENUMERATION_CAP as CAP};
use dpfair::generators::{
    agent_level_ef_default_c, bernoulli_profile, small_bundle_profile_experiment, uniform_profile, FairnessNotion,
};
use dpfair::{dp_moving_knife, is_ef_c, PrivacyParams, RandomStream, UtilityProfile};

#[test]
fn lower_coin_tail() {
    let r = anti_concentration_check(CoinTail::Lower, 100, 200_000, &RandomStream::from_seed(1)).unwrap();
    assert!(r.passed());
    assert!((r.estimate.rate - 0.382).abs() < 0.005, "{}", r.estimate.rate);
    assert!((r.exact - 0.382).abs() < 0.005);
}

#[test]
fn upper_coin_tail() {
    for gamma in [2.0, 8.0, 1024.0] {
        let r = anti_concentration_check(CoinTail::Upper { gamma }, 144, 200_000, &RandomStream::from_seed(2)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.exact >= 0.1 / gamma);
        assert!((r.estimate.rate - r.exact).abs() <= 4.0 * r.estimate.sigma + 1e-4);
    }
}

#[test]
fn small_bundle_violates_proportionality_often() {
    let s = RandomStream::from_seed(3);
    let r = small_bundle_profile_experiment(FairnessNotion::Prop, 4, 4000, 1000, 1, 4000, &s).unwrap();
    assert!(r.at_least(0.125), "{r:?}");
    let none = small_bundle_profile_experiment(FairnessNotion::Prop, 4, 4000, 1000, 4000, 200, &s).unwrap();
    assert_eq!(none.failures, 0);
}

#[test]
fn low_rank_agent_envies_often() {
    let (n, m) = (4, 4000);
    let c = agent_level_ef_default_c(n, m);
    let r = small_bundle_profile_experiment(FairnessNotion::Ef, n, m, m / n, c, 4000, &RandomStream::from_seed(4))
        .unwrap();
    assert!(r.at_least(0.01), "{r:?}");
}

#[test]
fn ef_allocator_meets_its_guarantee() {
    let mut s = RandomStream::from_seed(5);
    let params = PrivacyParams::new(2.0, 0.1).unwrap();
    for _ in 0..20 {
        let p = bernoulli_profile(2, 4, &mut s).unwrap();
        let prepared = PreparedEf::new(&p, &params, CAP).unwrap();
        let c = 3 * prepared.g() as usize / 2;
        let mech = |_: &UtilityProfile, s: &mut RandomStream| Ok(prepared.sample(s)?.allocation);
        let r = fairness_failure_rate(mech, &p, FairnessNotion::Ef, c, 500, &s.substream(0)).unwrap();
        assert!(r.at_most(0.1));
        let mut draw = s.substream(1);
        let run = prepared.sample(&mut draw).unwrap();
        assert!(is_ef_c(&p, &run.allocation, run.guaranteed_ef.unwrap() as usize).unwrap());
    }
}

#[test]
fn knife_meets_its_guarantee_with_a_smaller_constant() {
    // At constant 1 the truncation stays below m, so the cuts are
    // informative and the proof-chain bound is below m.
    let params = PrivacyParams::with_svt_constant(5.0, 0.1, 1.0).unwrap();
    let mut s = RandomStream::from_seed(6);
    let p = uniform_profile(4, 200, 100, &mut s).unwrap();
    let (_, trace) = dp_moving_knife(&p, &params, &RandomStream::from_seed(7)).unwrap();
    let c = trace.proportionality_bound();
    assert!(c < 200, "{c}");
    let mech = |p: &UtilityProfile, s: &mut RandomStream| Ok(dp_moving_knife(p, &params, s)?.0);
    let r = fairness_failure_rate(mech, &p, FairnessNotion::Prop, c, 300, &RandomStream::from_seed(8)).unwrap();
    assert!(r.at_most(0.1), "{r:?}");
}
