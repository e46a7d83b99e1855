//! Connected EF-c allocation through the exponential mechanism.
//!
//! Every connected allocation is a candidate. An allocation's score is the
//! negated smallest `t` in `1..=g` for which it is EF-`2t` with respect to
//! the utilities truncated by `g - t` items (`-g` when no `t` qualifies).
//! Changing one agent's value for one item moves every score by at most 1,
//! so the exponential mechanism over these scores is private at the
//! agent x item level.

use serde::{Deserialize, Serialize};

use crate::allocation::{connected_allocation_count, enumerate_connected_allocations, Bundles, ConnectedAllocation};
use crate::error::{Error, Result};
use crate::fairness::{ef_truncated, BundleTable};
use crate::mechanisms::exponential_mechanism;
use crate::params::PrivacyParams;
use crate::profile::UtilityProfile;
use crate::rng::RandomStream;

/// Default limit on the number of connected allocations scored.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Truncation budget `g = 4 * ceil(1 + ln((mn)^n / beta) / epsilon)` (natural log).
pub fn truncation_budget(m: usize, n: usize, epsilon: f64, beta: f64) -> Result<u64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("the truncation budget needs m >= 1 and n >= 1".into()));
    }
    let log_count = n as f64 * ((m * n) as f64).ln() - beta.ln();
    Ok(4 * (1.0 + log_count / epsilon).ceil() as u64)
}

/// Smallest `t` in `1..=g` with `A` EF-`2t` w.r.t. the `(g - t)`-truncated utilities.
pub fn qualifying_level(profile: &UtilityProfile, allocation: &impl Bundles, g: u64) -> Result<Option<u64>> {
    if g == 0 {
        return Err(Error::InvalidParameter("g must be at least 1".into()));
    }
    let table = BundleTable::new(profile, allocation)?;
    Ok(level_from_table(&table, g))
}

fn level_from_table(table: &BundleTable<'_>, g: u64) -> Option<u64> {
    (1..=g).find(|&t| ef_truncated(table, 2 * t as usize, (g - t) as usize))
}

/// Score in `[-g, -1]`.
pub fn score(profile: &UtilityProfile, allocation: &impl Bundles, g: u64) -> Result<i64> {
    Ok(-(qualifying_level(profile, allocation, g)?.unwrap_or(g) as i64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfRunReport {
    pub allocation: ConnectedAllocation,
    pub g: u64,
    pub score: i64,
    /// Best score among all candidates.
    pub max_score: i64,
    pub candidate_count: u128,
    pub epsilon: f64,
    pub beta: f64,
    /// `g + t` when the chosen allocation qualifies at level `t`; the
    /// allocation is then EF of that degree for the input utilities.
    pub guaranteed_ef: Option<u64>,
}

impl EfRunReport {
    /// Score shortfall tolerated by the exponential-mechanism accuracy bound.
    pub fn accuracy_slack(&self) -> f64 {
        2.0 * ((self.candidate_count as f64) / self.beta).ln() / self.epsilon
    }
}

/// Candidate set and scores for one profile, ready for repeated draws.
#[derive(Debug, Clone)]
pub struct PreparedEf {
    candidates: Vec<ConnectedAllocation>,
    levels: Vec<Option<u64>>,
    scores: Vec<i64>,
    g: u64,
    params: PrivacyParams,
}

impl PreparedEf {
    pub fn new(profile: &UtilityProfile, params: &PrivacyParams, cap: u128) -> Result<Self> {
        params.validate()?;
        let (m, n) = (profile.m(), profile.n());
        let count = connected_allocation_count(m, n);
        if count > cap {
            return Err(Error::EnumerationCap { count, cap });
        }
        let g = truncation_budget(m, n, params.epsilon, params.beta)?;
        let candidates: Vec<ConnectedAllocation> = enumerate_connected_allocations(m, n).collect();
        let levels = candidates
            .iter()
            .map(|a| BundleTable::new(profile, a).map(|t| level_from_table(&t, g)))
            .collect::<Result<Vec<_>>>()?;
        let scores = levels.iter().map(|l| -(l.unwrap_or(g) as i64)).collect();
        Ok(Self { candidates, levels, scores, g, params: *params })
    }

    pub fn candidates(&self) -> &[ConnectedAllocation] {
        &self.candidates
    }

    pub fn scores(&self) -> &[i64] {
        &self.scores
    }

    pub fn g(&self) -> u64 {
        self.g
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn sample(&self, stream: &mut RandomStream) -> Result<EfRunReport> {
        let scores: Vec<f64> = self.scores.iter().map(|&s| s as f64).collect();
        let h = exponential_mechanism(stream, &scores, self.params.epsilon)?;
        Ok(EfRunReport {
            allocation: self.candidates[h].clone(),
            g: self.g,
            score: self.scores[h],
            max_score: self.scores.iter().copied().max().expect("nonempty candidate set"),
            candidate_count: self.candidates.len() as u128,
            epsilon: self.params.epsilon,
            beta: self.params.beta,
            guaranteed_ef: self.levels[h].map(|t| self.g + t),
        })
    }
}

/// Runs the private EF allocator with the default enumeration cap.
pub fn dp_ef_allocate(profile: &UtilityProfile, params: &PrivacyParams, stream: &mut RandomStream) -> Result<EfRunReport> {
    dp_ef_allocate_with_cap(profile, params, stream, DEFAULT_ENUMERATION_CAP)
}

pub fn dp_ef_allocate_with_cap(
    profile: &UtilityProfile,
    params: &PrivacyParams,
    stream: &mut RandomStream,
    cap: u128,
) -> Result<EfRunReport> {
    if profile.m() == 0 {
        return Err(Error::InvalidParameter("the EF allocator needs at least one item".into()));
    }
    PreparedEf::new(profile, params, cap)?.sample(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::{is_ef_c, is_ef_d_wrt_truncated};

    fn binary(code: u32, n: usize, m: usize) -> UtilityProfile {
        let rows: Vec<Vec<bool>> =
            (0..n).map(|i| (0..m).map(|j| code & (1 << (i * m + j)) != 0).collect()).collect();
        UtilityProfile::binary(&rows).unwrap()
    }

    #[test]
    fn budget_example() {
        assert_eq!(truncation_budget(3, 2, 1.0, 0.1).unwrap(), 28);
        assert!(truncation_budget(0, 2, 1.0, 0.1).is_err());
    }

    #[test]
    fn zero_profile_and_unit_g_score_minus_one() {
        let zero = UtilityProfile::zeros(3, 4).unwrap();
        for a in enumerate_connected_allocations(4, 3) {
            for g in 1..6 {
                assert_eq!(score(&zero, &a, g).unwrap(), -1);
            }
        }
        for code in 0..64 {
            let p = binary(code, 2, 3);
            for a in enumerate_connected_allocations(3, 2) {
                assert_eq!(score(&p, &a, 1).unwrap(), -1);
            }
        }
        assert!(score(&zero, &enumerate_connected_allocations(4, 3).next().unwrap(), 0).is_err());
    }

    #[test]
    fn score_matches_definition_scan() {
        let g = 3u64;
        for code in 0u32..256 {
            let p = binary(code, 2, 4);
            for a in enumerate_connected_allocations(4, 2) {
                // Scan every t independently and take the smallest qualifying one.
                let qualifying: Vec<u64> = (1..=g)
                    .filter(|&t| is_ef_d_wrt_truncated(&p, &a, 2 * t as usize, (g - t) as usize).unwrap())
                    .collect();
                let expected = -(qualifying.first().copied().unwrap_or(g) as i64);
                assert_eq!(score(&p, &a, g).unwrap(), expected);
            }
        }
    }

    #[test]
    fn single_agent_scores_minus_one() {
        let p = UtilityProfile::additive(1, vec![vec![4, 0, 7]]).unwrap();
        for a in enumerate_connected_allocations(3, 1) {
            assert_eq!(score(&p, &a, 5).unwrap(), -1);
        }
    }

    #[test]
    fn zero_profile_selection_is_uniform() {
        let p = UtilityProfile::zeros(2, 3).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let prepared = PreparedEf::new(&p, &params, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(prepared.candidates().len(), 6);
        assert!(prepared.scores().iter().all(|&s| s == -1));
        let mut s = RandomStream::new(1, 0);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..60_000 {
            *counts.entry(prepared.sample(&mut s).unwrap().allocation).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for &c in counts.values() {
            // sd of a binomial(60000, 1/6) count is about 91
            assert!((c as f64 - 10_000.0).abs() < 5.0 * 91.3, "{c}");
        }
    }

    #[test]
    fn winner_is_valid_and_fair_at_reported_degree() {
        let mut s = RandomStream::new(2, 0);
        let params = PrivacyParams::new(2.0, 0.1).unwrap();
        for code in (0u32..256).step_by(7) {
            let p = binary(code, 2, 4);
            let report = dp_ef_allocate(&p, &params, &mut s).unwrap();
            assert!(ConnectedAllocation::new(4, report.allocation.spans().to_vec()).is_ok());
            assert_eq!(report.score, score(&p, &report.allocation, report.g).unwrap());
            assert_eq!(report.candidate_count, 8);
            let bound = report.guaranteed_ef.expect("a qualifying level exists at this scale");
            assert!(is_ef_c(&p, &report.allocation, bound as usize).unwrap());
        }
    }

    #[test]
    fn cap_and_empty_instance_errors() {
        let p = UtilityProfile::zeros(3, 12).unwrap();
        let params = PrivacyParams::new(1.0, 0.1).unwrap();
        let mut s = RandomStream::from_seed(0);
        assert_eq!(
            dp_ef_allocate_with_cap(&p, &params, &mut s, 100).unwrap_err(),
            Error::EnumerationCap { count: 399, cap: 100 }
        );
        let empty = UtilityProfile::zeros(2, 0).unwrap();
        assert!(dp_ef_allocate(&empty, &params, &mut s).is_err());
    }
}
