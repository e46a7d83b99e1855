//! Empirical and exact privacy audits, fairness failure rates,
//! anti-concentration checks, and the composition structure of a knife run.
//!
//! Sampled audits can falsify a privacy claim but never prove one. An
//! outcome is flagged only when the lower end of its confidence interval
//! for the probability ratio exceeds the bound.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::allocation::ConnectedAllocation;
use crate::error::{Error, Result};
use crate::fairness::{is_ef_c, is_prop_c};
use crate::generators::FairnessNotion;
use crate::knife::KnifeTrace;
use crate::oracles::{exact_em_distribution, exact_lower_tail, exact_upper_tail, EmDistribution};
use crate::params::{Adjacency, PrivacyParams};
use crate::profile::{adjacency_distance, UtilityProfile};
use crate::rng::RandomStream;

/// Width of every confidence interval, in standard deviations.
pub const Z: f64 = 3.0;

/// Slack allowed on exact-distribution ratios.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Wilson score interval for `successes` out of `trials` at `z` sigmas.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub failures: u64,
    pub trials: u64,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub sigma: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    pub fn new(failures: u64, trials: u64) -> Self {
        let rate = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
        let sigma = if trials == 0 { 0.0 } else { (rate * (1.0 - rate) / trials as f64).sqrt() };
        let (ci_low, ci_high) = wilson_interval(failures, trials, Z);
        Self { failures, trials, rate, sigma, ci_low, ci_high }
    }

    /// Whether the rate is consistent with being at least `bound`.
    pub fn at_least(&self, bound: f64) -> bool {
        self.rate >= bound - Z * self.sigma
    }

    /// Whether the rate is consistent with being at most `bound`.
    pub fn at_most(&self, bound: f64) -> bool {
        self.rate <= bound + Z * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRatio {
    pub outcome: String,
    pub p1: f64,
    pub p2: f64,
    /// Interval for `p1` (degenerate in exact mode).
    pub ci1: (f64, f64),
    pub ci2: (f64, f64),
    /// Conservative (lower-CI) estimate of `max(p1/p2, p2/p1)`.
    pub ratio_lower: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub mode: AuditMode,
    /// Runs per input; 0 in exact mode.
    pub samples: u64,
    /// Audited privacy loss, e.g. `k * epsilon`.
    pub bound_log: f64,
    pub outcomes: Vec<OutcomeRatio>,
    /// Largest point estimate of `|ln(p1/p2)|` over outcomes seen under both inputs.
    pub max_log_ratio: f64,
    /// Largest `ln` of the conservative ratio over all outcomes.
    pub max_log_ratio_lower: f64,
}

impl RatioReport {
    pub fn bound(&self) -> f64 {
        self.bound_log.exp()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &OutcomeRatio> {
        self.outcomes.iter().filter(|o| o.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none()
    }

    fn from_outcomes(mode: AuditMode, samples: u64, bound_log: f64, outcomes: Vec<OutcomeRatio>) -> Self {
        let max_log_ratio = outcomes
            .iter()
            .filter(|o| o.p1 > 0.0 && o.p2 > 0.0)
            .map(|o| (o.p1 / o.p2).ln().abs())
            .fold(0.0, f64::max);
        let max_log_ratio_lower = outcomes.iter().map(|o| o.ratio_lower.ln()).fold(0.0, f64::max);
        Self { mode, samples, bound_log, outcomes, max_log_ratio, max_log_ratio_lower }
    }
}

fn check_same_shape(p1: &UtilityProfile, p2: &UtilityProfile) -> Result<()> {
    if p1.n() != p2.n() || p1.m() != p2.m() {
        return Err(Error::ShapeMismatch(format!(
            "profiles are {}x{} and {}x{}",
            p1.n(),
            p1.m(),
            p2.n(),
            p2.m()
        )));
    }
    Ok(())
}

fn conservative_ratio(a: (f64, f64), b: (f64, f64)) -> f64 {
    let over = |lo: f64, hi: f64| if lo == 0.0 { 0.0 } else { lo / hi };
    over(a.0, b.1).max(over(b.0, a.1)).max(1.0)
}

/// Runs `mechanism` `samples` times on each input and compares per-outcome
/// frequencies against the bound `exp(bound_log)`.
///
/// Run `s` on `p1` draws from `stream.substream(2s)` and on `p2` from
/// `stream.substream(2s + 1)`.
pub fn estimate_privacy_ratio<M, O>(
    mut mechanism: M,
    p1: &UtilityProfile,
    p2: &UtilityProfile,
    bound_log: f64,
    samples: u64,
    stream: &RandomStream,
) -> Result<RatioReport>
where
    M: FnMut(&UtilityProfile, &mut RandomStream) -> Result<O>,
    O: Ord + Display,
{
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    check_same_shape(p1, p2)?;
    let mut counts: BTreeMap<O, (u64, u64)> = BTreeMap::new();
    for s in 0..samples {
        let a = mechanism(p1, &mut stream.substream(2 * s))?;
        counts.entry(a).or_default().0 += 1;
        let b = mechanism(p2, &mut stream.substream(2 * s + 1))?;
        counts.entry(b).or_default().1 += 1;
    }
    let bound = bound_log.exp();
    let outcomes = counts
        .into_iter()
        .map(|(o, (c1, c2))| {
            let ci1 = wilson_interval(c1, samples, Z);
            let ci2 = wilson_interval(c2, samples, Z);
            let ratio_lower = conservative_ratio(ci1, ci2);
            OutcomeRatio {
                outcome: o.to_string(),
                p1: c1 as f64 / samples as f64,
                p2: c2 as f64 / samples as f64,
                ci1,
                ci2,
                ratio_lower,
                flagged: ratio_lower > bound,
            }
        })
        .collect();
    Ok(RatioReport::from_outcomes(AuditMode::Sampled, samples, bound_log, outcomes))
}

/// Compares two exact output distributions over the same candidate list.
pub fn exact_privacy_ratio(d1: &EmDistribution, d2: &EmDistribution, bound_log: f64) -> Result<RatioReport> {
    if d1.candidates != d2.candidates {
        return Err(Error::ShapeMismatch("distributions range over different candidates".into()));
    }
    let bound = bound_log.exp();
    let outcomes = d1
        .candidates
        .iter()
        .zip(d1.probabilities.iter().zip(&d2.probabilities))
        .map(|(a, (&p1, &p2))| {
            let ratio = (p1 / p2).max(p2 / p1);
            OutcomeRatio {
                outcome: a.to_string(),
                p1,
                p2,
                ci1: (p1, p1),
                ci2: (p2, p2),
                ratio_lower: ratio,
                flagged: ratio > bound + EXACT_TOLERANCE,
            }
        })
        .collect();
    Ok(RatioReport::from_outcomes(AuditMode::Exact, 0, bound_log, outcomes))
}

/// Exact audit of the EF allocator on two profiles at distance `k`,
/// against `exp(k * epsilon)`.
pub fn exact_em_privacy_check(
    p1: &UtilityProfile,
    p2: &UtilityProfile,
    params: &PrivacyParams,
    cap: u128,
) -> Result<RatioReport> {
    let k = adjacency_distance(p1, p2, Adjacency::AgentItemLevel)?;
    let d1 = exact_em_distribution(p1, params, cap)?;
    let d2 = exact_em_distribution(p2, params, cap)?;
    exact_privacy_ratio(&d1, &d2, k as f64 * params.epsilon)
}

/// Sampled audit against `exp(k * epsilon)` where `k` is the agent x item
/// distance between the inputs.
pub fn group_privacy_check<M, O>(
    mechanism: M,
    p1: &UtilityProfile,
    p2: &UtilityProfile,
    epsilon: f64,
    samples: u64,
    stream: &RandomStream,
) -> Result<RatioReport>
where
    M: FnMut(&UtilityProfile, &mut RandomStream) -> Result<O>,
    O: Ord + Display,
{
    let k = adjacency_distance(p1, p2, Adjacency::AgentItemLevel)?;
    estimate_privacy_ratio(mechanism, p1, p2, k as f64 * epsilon, samples, stream)
}

/// Fraction of runs whose output is not EF-`c` (or PROP-`c`); run `t` draws
/// from `stream.substream(t)`.
pub fn fairness_failure_rate<M>(
    mut mechanism: M,
    profile: &UtilityProfile,
    notion: FairnessNotion,
    c: usize,
    trials: u64,
    stream: &RandomStream,
) -> Result<RateEstimate>
where
    M: FnMut(&UtilityProfile, &mut RandomStream) -> Result<ConnectedAllocation>,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut failures = 0;
    for t in 0..trials {
        let a = mechanism(profile, &mut stream.substream(t))?;
        let fair = match notion {
            FairnessNotion::Ef => is_ef_c(profile, &a, c)?,
            FairnessNotion::Prop => is_prop_c(profile, &a, c)?,
        };
        failures += u64::from(!fair);
    }
    Ok(RateEstimate::new(failures, trials))
}

/// Tail event of a sum `S` of `k` fair coins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "tail")]
pub enum CoinTail {
    /// `S < k/2 - 0.1 sqrt(k)`, probability at least 1/4.
    Lower,
    /// `S > k/2 + 0.1 sqrt(k ln gamma)`, probability at least `0.1 / gamma`.
    Upper { gamma: f64 },
}

impl CoinTail {
    pub fn bound(&self) -> f64 {
        match *self {
            CoinTail::Lower => 0.25,
            CoinTail::Upper { gamma } => 0.1 / gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentrationReport {
    pub tail: CoinTail,
    pub k: u64,
    pub estimate: RateEstimate,
    pub bound: f64,
    pub exact: f64,
}

impl AntiConcentrationReport {
    pub fn passed(&self) -> bool {
        self.estimate.at_least(self.bound)
    }
}

/// Monte-Carlo frequency of `tail`; trial `t` draws from `stream.substream(t)`.
pub fn anti_concentration_check(
    tail: CoinTail,
    k: u64,
    trials: u64,
    stream: &RandomStream,
) -> Result<AntiConcentrationReport> {
    if k < 100 {
        return Err(Error::InvalidParameter(format!("k must be at least 100, got {k}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let kf = k as f64;
    let (hits_tail, exact): (Box<dyn Fn(u64) -> bool>, f64) = match tail {
        CoinTail::Lower => {
            let cut = kf / 2.0 - 0.1 * kf.sqrt();
            (Box::new(move |s| (s as f64) < cut), exact_lower_tail(k))
        }
        CoinTail::Upper { gamma } => {
            if !(2.0..=(kf / 4.0).exp2()).contains(&gamma) {
                return Err(Error::InvalidParameter(format!("gamma must lie in [2, 2^(k/4)], got {gamma}")));
            }
            let cut = kf / 2.0 + 0.1 * (kf * gamma.ln()).sqrt();
            (Box::new(move |s| (s as f64) > cut), exact_upper_tail(k, gamma))
        }
    };
    let full_words = k / 64;
    let rest = k % 64;
    let mut hits = 0;
    for t in 0..trials {
        let mut s = stream.substream(t);
        let mut sum = 0u64;
        for _ in 0..full_words {
            sum += u64::from(rand::RngCore::next_u64(&mut s).count_ones());
        }
        if rest > 0 {
            sum += u64::from((rand::RngCore::next_u64(&mut s) & ((1u64 << rest) - 1)).count_ones());
        }
        hits += u64::from(hits_tail(sum));
    }
    Ok(AntiConcentrationReport { tail, k, estimate: RateEstimate::new(hits, trials), bound: tail.bound(), exact })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    /// `(level, epsilon_b)` per distinct level.
    pub ledger: Vec<(u32, f64)>,
    /// Exact sum of level shares as `numerator / denominator` of epsilon.
    pub budget_share: (u128, u128),
    pub violations: Vec<String>,
}

impl CompositionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that within every recursion level each agent's row is read by at
/// most one node, only nodes containing the agent read it, and the level
/// shares sum to at most the full budget.
pub fn check_parallel_composition(trace: &KnifeTrace) -> CompositionReport {
    let mut violations = Vec::new();
    let mut readers: BTreeMap<(u32, usize), u64> = BTreeMap::new();
    for node in trace.nodes.iter().filter(|v| !v.is_leaf()) {
        for &agent in &node.rows_read {
            if !node.agents.contains(&agent) {
                violations.push(format!("node {} reads agent {agent} outside its group", node.id));
            }
            if let Some(other) = readers.insert((node.level, agent), node.id) {
                violations.push(format!(
                    "agent {agent} is read by nodes {other} and {} at level {}",
                    node.id, node.level
                ));
            }
        }
    }
    let share = trace.budget_share();
    if share > num_rational::Ratio::from_integer(1) {
        violations.push(format!("level shares sum to {share} of epsilon"));
    }
    CompositionReport { ledger: trace.budget_ledger(), budget_share: (*share.numer(), *share.denom()), violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Span;
    use crate::ef_em::{PreparedEf, DEFAULT_ENUMERATION_CAP as CAP};
    use crate::knife::dp_moving_knife;

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(50, 100, 3.0);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 100, 3.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 9.0 / 109.0).abs() < 1e-12);
    }

    #[test]
    fn constant_mechanism_has_unit_ratios() {
        let p1 = UtilityProfile::zeros(2, 3).unwrap();
        let p2 = p1.with_value(0, 0, 1).unwrap();
        let fixed = ConnectedAllocation::new(3, vec![Some(Span { start: 0, end: 3 }), None]).unwrap();
        let mech = |_: &UtilityProfile, _: &mut RandomStream| Ok(fixed.clone());
        let r = estimate_privacy_ratio(mech, &p1, &p2, 1.0, 500, &RandomStream::from_seed(0)).unwrap();
        assert_eq!(r.outcomes.len(), 1);
        assert_eq!(r.outcomes[0].p1, 1.0);
        assert_eq!(r.max_log_ratio, 0.0);
        assert!(r.passed());
        assert!(estimate_privacy_ratio(mech, &p1, &p2, 1.0, 0, &RandomStream::from_seed(0)).is_err());
    }

    #[test]
    fn sampled_audit_flags_a_leaky_mechanism() {
        // Reveals one cell of the input outright.
        let p1 = UtilityProfile::zeros(2, 2).unwrap();
        let p2 = p1.with_value(1, 1, 1).unwrap();
        let mech = |p: &UtilityProfile, _: &mut RandomStream| Ok(p.row(1)[1]);
        let r = estimate_privacy_ratio(mech, &p1, &p2, 1.0, 2000, &RandomStream::from_seed(1)).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn sampled_em_audit_agrees_with_exact() {
        let p1 = UtilityProfile::binary(&[vec![true, false, true], vec![false, true, true]]).unwrap();
        let p2 = p1.with_value(0, 1, 1).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let (e1, e2) = (PreparedEf::new(&p1, &params, CAP).unwrap(), PreparedEf::new(&p2, &params, CAP).unwrap());
        let mech = |p: &UtilityProfile, s: &mut RandomStream| {
            let prepared = if p == &p1 { &e1 } else { &e2 };
            Ok(prepared.sample(s)?.allocation)
        };
        let r = estimate_privacy_ratio(mech, &p1, &p2, 1.0, 20_000, &RandomStream::from_seed(2)).unwrap();
        assert!(r.passed(), "{:?}", r.flagged().collect::<Vec<_>>());
        let exact = exact_em_privacy_check(&p1, &p2, &params, CAP).unwrap();
        assert!(exact.passed());
        assert_eq!(exact.mode, AuditMode::Exact);
    }

    #[test]
    fn identical_inputs_have_zero_bound() {
        let p = UtilityProfile::binary(&[vec![true, false], vec![true, true]]).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let r = exact_em_privacy_check(&p, &p, &params, CAP).unwrap();
        assert_eq!(r.bound_log, 0.0);
        assert!(r.outcomes.iter().all(|o| o.ratio_lower == 1.0));
        assert!(r.passed());
    }

    #[test]
    fn failure_rate_at_full_removal_is_zero() {
        let mut s = RandomStream::from_seed(3);
        let p = crate::generators::bernoulli_profile(3, 6, &mut s).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let prepared = PreparedEf::new(&p, &params, CAP).unwrap();
        for notion in [FairnessNotion::Ef, FairnessNotion::Prop] {
            let mech = |_: &UtilityProfile, s: &mut RandomStream| Ok(prepared.sample(s)?.allocation);
            let r = fairness_failure_rate(mech, &p, notion, 6, 200, &RandomStream::from_seed(4)).unwrap();
            assert_eq!(r.failures, 0);
        }
    }

    #[test]
    fn anti_concentration_parameter_checks() {
        let s = RandomStream::from_seed(0);
        assert!(anti_concentration_check(CoinTail::Lower, 99, 10, &s).is_err());
        assert!(anti_concentration_check(CoinTail::Upper { gamma: 1.5 }, 100, 10, &s).is_err());
        assert!(anti_concentration_check(CoinTail::Upper { gamma: 2f64.powi(26) }, 100, 10, &s).is_err());
        assert!(anti_concentration_check(CoinTail::Upper { gamma: 2f64.powi(25) }, 100, 10, &s).is_ok());
        assert!(anti_concentration_check(CoinTail::Lower, 100, 0, &s).is_err());
    }

    #[test]
    fn anti_concentration_tracks_exact_tail() {
        let r = anti_concentration_check(CoinTail::Lower, 130, 100_000, &RandomStream::from_seed(5)).unwrap();
        assert!((r.estimate.rate - r.exact).abs() < Z * r.estimate.sigma + 1e-3, "{r:?}");
        assert!(r.passed());
    }

    #[test]
    fn knife_trace_composes_in_parallel() {
        let mut s = RandomStream::from_seed(6);
        for n in 2..=9 {
            let p = crate::generators::uniform_profile(n, 30, 10, &mut s).unwrap();
            let params = PrivacyParams::with_svt_constant(3.0, 0.1, 0.05).unwrap();
            let (_, trace) = dp_moving_knife(&p, &params, &RandomStream::new(7, n as u64)).unwrap();
            let report = check_parallel_composition(&trace);
            assert!(report.passed(), "{report:?}");
            assert!(report.budget_share.0 <= report.budget_share.1);
        }
    }

    #[test]
    fn composition_check_detects_double_reads() {
        let p = UtilityProfile::zeros(4, 8).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let (_, mut trace) = dp_moving_knife(&p, &params, &RandomStream::from_seed(8)).unwrap();
        let level_two: Vec<usize> =
            trace.nodes.iter().enumerate().filter(|(_, v)| !v.is_leaf() && v.agents.len() == 2).map(|(i, _)| i).collect();
        let stolen = trace.nodes[level_two[1]].agents[0];
        trace.nodes[level_two[0]].rows_read.push(stolen);
        assert_eq!(check_parallel_composition(&trace).violations.len(), 2);
    }
}
