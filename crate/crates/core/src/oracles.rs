//! Exhaustive baselines: best achievable fairness over connected
//! allocations, closed-form exponential-mechanism distributions, exact
//! binomial tails, and sensitivity audits over all binary profiles.

use serde::{Deserialize, Serialize};

use crate::allocation::{connected_allocation_count, enumerate_connected_allocations, ConnectedAllocation};
use crate::ef_em::{score, PreparedEf};
use crate::error::{Error, Result};
use crate::fairness::{ef_degree, prop_degree};
use crate::knife::f_value;
use crate::params::PrivacyParams;
use crate::profile::UtilityProfile;

/// Largest `n * m` accepted by the exhaustive binary-universe audits.
pub const MAX_AUDIT_CELLS: usize = 8;

fn check_cap(profile: &UtilityProfile, cap: u128) -> Result<()> {
    let count = connected_allocation_count(profile.m(), profile.n());
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(())
}

/// Smallest `c` such that some connected allocation is EF-`c`.
pub fn min_ef_c_connected(profile: &UtilityProfile, cap: u128) -> Result<usize> {
    check_cap(profile, cap)?;
    let mut best = usize::MAX;
    for a in enumerate_connected_allocations(profile.m(), profile.n()) {
        best = best.min(ef_degree(profile, &a)?);
        if best == 0 {
            break;
        }
    }
    Ok(best)
}

/// Smallest `c` such that some connected allocation is PROP-`c`; `None`
/// when no allocation is PROP-`c` for any `c` (general utilities only).
pub fn min_prop_c_connected(profile: &UtilityProfile, cap: u128) -> Result<Option<usize>> {
    check_cap(profile, cap)?;
    let mut best: Option<usize> = None;
    for a in enumerate_connected_allocations(profile.m(), profile.n()) {
        if let Some(d) = prop_degree(profile, &a)? {
            best = Some(best.map_or(d, |b| b.min(d)));
        }
        if best == Some(0) {
            break;
        }
    }
    Ok(best)
}

/// Whether some connected allocation is EF-2.
pub fn ef2_connected_exists(profile: &UtilityProfile, cap: u128) -> Result<bool> {
    Ok(min_ef_c_connected(profile, cap)? <= 2)
}

/// Closed-form output distribution of the private EF allocator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDistribution {
    pub g: u64,
    pub candidates: Vec<ConnectedAllocation>,
    pub scores: Vec<i64>,
    pub probabilities: Vec<f64>,
}

impl EmDistribution {
    pub fn probability_of(&self, allocation: &ConnectedAllocation) -> f64 {
        self.candidates.iter().position(|c| c == allocation).map_or(0.0, |h| self.probabilities[h])
    }
}

/// `exp(epsilon * s / 2)` normalized through a log-sum-exp.
pub fn em_probabilities(scores: &[i64], epsilon: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|&s| 0.5 * epsilon * s as f64).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    logits.iter().map(|l| (l - log_z).exp()).collect()
}

pub fn exact_em_distribution(profile: &UtilityProfile, params: &PrivacyParams, cap: u128) -> Result<EmDistribution> {
    let prepared = PreparedEf::new(profile, params, cap)?;
    Ok(EmDistribution {
        g: prepared.g(),
        probabilities: em_probabilities(prepared.scores(), params.epsilon),
        candidates: prepared.candidates().to_vec(),
        scores: prepared.scores().to_vec(),
    })
}

/// `Pr[S = i]` for `S ~ Binomial(k, 1/2)`, `i = 0..=k`, via log-space products.
pub fn binomial_half_pmf(k: u64) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut log_c = 0.0f64;
    let mut pmf = Vec::with_capacity(k as usize + 1);
    for i in 0..=k {
        pmf.push((log_c - k as f64 * ln2).exp());
        if i < k {
            log_c += ((k - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    pmf
}

/// Exact `Pr[S < k/2 - 0.1 sqrt(k)]` for a sum of `k` fair coins.
pub fn exact_lower_tail(k: u64) -> f64 {
    let cut = k as f64 / 2.0 - 0.1 * (k as f64).sqrt();
    binomial_half_pmf(k).iter().enumerate().filter(|(i, _)| (*i as f64) < cut).map(|(_, p)| p).sum()
}

/// Exact `Pr[S > k/2 + 0.1 sqrt(k ln gamma)]` for a sum of `k` fair coins.
pub fn exact_upper_tail(k: u64, gamma: f64) -> f64 {
    let cut = k as f64 / 2.0 + 0.1 * (k as f64 * gamma.ln()).sqrt();
    binomial_half_pmf(k).iter().enumerate().filter(|(i, _)| (*i as f64) > cut).map(|(_, p)| p).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityWitness {
    pub low: UtilityProfile,
    pub high: UtilityProfile,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub max_delta: u64,
    pub witness: Option<SensitivityWitness>,
    /// Adjacent profile pairs visited.
    pub pairs_examined: usize,
    /// Function evaluations compared across those pairs.
    pub comparisons: usize,
}

fn binary_profile(code: usize, n: usize, m: usize) -> UtilityProfile {
    let values = (0..n).map(|i| (0..m).map(|j| ((code >> (i * m + j)) & 1) as u64).collect()).collect();
    UtilityProfile::additive(1, values).expect("well-formed binary profile")
}

/// Evaluates `eval` on every binary profile and compares each pair that
/// differs in exactly one cell.
fn audit_binary_universe<F>(n: usize, m: usize, eval: F) -> Result<SensitivityReport>
where
    F: Fn(&UtilityProfile) -> Result<Vec<(i64, String)>>,
{
    let cells = n * m;
    if n == 0 || cells > MAX_AUDIT_CELLS {
        return Err(Error::InvalidParameter(format!(
            "exhaustive audit needs 1 <= n and n * m <= {MAX_AUDIT_CELLS}, got n = {n}, m = {m}"
        )));
    }
    let profiles: Vec<UtilityProfile> = (0..1usize << cells).map(|c| binary_profile(c, n, m)).collect();
    let values = profiles.iter().map(&eval).collect::<Result<Vec<_>>>()?;
    let mut report = SensitivityReport { max_delta: 0, witness: None, pairs_examined: 0, comparisons: 0 };
    for code in 0..profiles.len() {
        for bit in (0..cells).filter(|b| code & (1 << b) == 0) {
            let other = code | (1 << bit);
            report.pairs_examined += 1;
            for ((a, label), (b, _)) in values[code].iter().zip(&values[other]) {
                report.comparisons += 1;
                let delta = a.abs_diff(*b);
                if delta > report.max_delta || (report.witness.is_none() && delta == report.max_delta && delta > 0) {
                    report.max_delta = delta;
                    report.witness = Some(SensitivityWitness {
                        low: profiles[code].clone(),
                        high: profiles[other].clone(),
                        detail: format!("{label}: {a} vs {b}"),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Largest change of the allocation score between adjacent binary profiles.
pub fn audit_score_sensitivity(m: usize, n: usize, g: u64) -> Result<SensitivityReport> {
    let allocations: Vec<ConnectedAllocation> = enumerate_connected_allocations(m, n).collect();
    audit_binary_universe(n, m, |p| {
        allocations
            .iter()
            .enumerate()
            .map(|(h, a)| Ok((score(p, a, g)?, format!("allocation #{h}"))))
            .collect()
    })
}

/// Largest change of the knife-position score between adjacent binary
/// profiles, over every agent, item range, cut, and group size `2..=n`.
pub fn audit_f_sensitivity(m: usize, n: usize, g: u64) -> Result<SensitivityReport> {
    let mut queries = Vec::new();
    for agent in 0..n {
        for start in 0..m {
            for end in start + 1..=m {
                for cut in start + 1..=end {
                    for size in 2..=n.max(2) {
                        queries.push((agent, start, end, cut, size - size / 2, size / 2));
                    }
                }
            }
        }
    }
    audit_binary_universe(n, m, |p| {
        queries
            .iter()
            .map(|&(agent, start, end, cut, nl, nr)| {
                let f = f_value(p, agent, start..end, cut, g, nl, nr)?;
                Ok((f as i64, format!("agent {agent}, range {start}..{end}, cut {cut}, split {nl}/{nr}")))
            })
            .collect()
    })
}
