//! Instance generators: random binary and uniform profiles, the packing
//! families behind the connected lower bounds, and the random-utility
//! experiments behind the agent-level lower bounds.

use serde::{Deserialize, Serialize};

use crate::audit::RateEstimate;
use crate::allocation::{Bundles, ConnectedAllocation, Span};
use crate::error::{Error, Result};
use crate::profile::UtilityProfile;
use crate::rng::RandomStream;

const ZETA: f64 = 0.01;

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!("need n >= 1 and m >= 1, got n = {n}, m = {m}")));
    }
    Ok(())
}

/// `m` fair coins packed into 64-bit words; bits past `m` are zero.
fn coin_words(stream: &mut RandomStream, m: usize) -> Vec<u64> {
    let mut words: Vec<u64> = (0..m.div_ceil(64)).map(|_| rand::RngCore::next_u64(stream)).collect();
    if !m.is_multiple_of(64) {
        *words.last_mut().expect("m >= 1") &= (1u64 << (m % 64)) - 1;
    }
    words
}

/// Number of set bits at positions `range`.
fn ones_in(words: &[u64], range: std::ops::Range<usize>) -> usize {
    let (start, end) = (range.start, range.end);
    if start >= end {
        return 0;
    }
    let (first, last) = (start / 64, (end - 1) / 64);
    let mut total = 0;
    for w in first..=last {
        let mut word = words[w];
        if w == first {
            word &= u64::MAX << (start % 64);
        }
        if w == last && end % 64 != 0 {
            word &= (1u64 << (end % 64)) - 1;
        }
        total += word.count_ones() as usize;
    }
    total
}

/// Binary profile with independent fair-coin entries.
pub fn bernoulli_profile(n: usize, m: usize, stream: &mut RandomStream) -> Result<UtilityProfile> {
    check_shape(n, m)?;
    let values = (0..n)
        .map(|_| {
            let words = coin_words(stream, m);
            (0..m).map(|j| (words[j / 64] >> (j % 64)) & 1).collect()
        })
        .collect();
    UtilityProfile::additive(1, values)
}

/// Additive profile with entries uniform on `0..=scale`, read as `value / scale`.
pub fn uniform_profile(n: usize, m: usize, scale: u64, stream: &mut RandomStream) -> Result<UtilityProfile> {
    check_shape(n, m)?;
    if scale == 0 {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let values = (0..n).map(|_| (0..m).map(|_| stream.below(scale + 1)).collect()).collect();
    UtilityProfile::additive(scale, values)
}

pub fn all_zero_profile(n: usize, m: usize) -> Result<UtilityProfile> {
    UtilityProfile::zeros(n, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessNotion {
    Ef,
    Prop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingFamily {
    pub notion: FairnessNotion,
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub t_count: usize,
    pub block_width: usize,
    pub base: UtilityProfile,
    /// `members[t]` is the profile for block `t` (0-based).
    pub members: Vec<UtilityProfile>,
}

impl PackingFamily {
    /// Adjacency distance between the base and every member.
    pub fn distance(&self) -> usize {
        2 * self.block_width
    }

    /// First item of the suffix valued by agents other than the first two.
    pub fn suffix_start(&self) -> usize {
        self.m - self.suffix_len()
    }

    fn suffix_len(&self) -> usize {
        suffix_len(self.notion, self.n, self.c)
    }
}

fn suffix_len(notion: FairnessNotion, n: usize, c: usize) -> usize {
    match notion {
        FairnessNotion::Ef => (c + 1) * (n - 2) + 1,
        FairnessNotion::Prop => c * n + 1,
    }
}

/// `c = floor(0.01 min{ln m / eps, m / n, sqrt m})`.
pub fn ef_packing_default_c(n: usize, m: usize, epsilon: f64) -> usize {
    let (mf, nf) = (m as f64, n as f64);
    (ZETA * (mf.ln() / epsilon).min(mf / nf).min(mf.sqrt())).floor().max(0.0) as usize
}

/// `T = floor(m / (4c + 4))`.
pub fn ef_packing_default_t(m: usize, c: usize) -> usize {
    m / (4 * c + 4)
}

/// `c = floor(0.01 min{ln(m/n) / (eps n), m / n, sqrt(m / n)})`.
pub fn prop_packing_default_c(n: usize, m: usize, epsilon: f64) -> usize {
    let ratio = m as f64 / n as f64;
    (ZETA * (ratio.ln() / (epsilon * n as f64)).min(ratio).min(ratio.sqrt())).floor().max(0.0) as usize
}

/// `T = floor(m / (2nc + 2))`.
pub fn prop_packing_default_t(n: usize, m: usize, c: usize) -> usize {
    m / (2 * n * c + 2)
}

fn packing_family(notion: FairnessNotion, n: usize, m: usize, c: usize, t_count: usize) -> Result<PackingFamily> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("packing families need n >= 3, got {n}")));
    }
    if c == 0 || t_count == 0 {
        return Err(Error::InvalidParameter("packing families need c >= 1 and T >= 1".into()));
    }
    let block_width = match notion {
        FairnessNotion::Ef => 2 * c + 1,
        FairnessNotion::Prop => n * c + 1,
    };
    let suffix_len = suffix_len(notion, n, c);
    if block_width * t_count > m || suffix_len > m {
        return Err(Error::InvalidParameter(format!(
            "{t_count} blocks of width {block_width} and a suffix of {suffix_len} items do not fit in m = {m}"
        )));
    }
    let suffix: Vec<u64> = (0..m).map(|j| u64::from(j >= m - suffix_len)).collect();
    let row_for = |agent: usize, block: Option<usize>| -> Vec<u64> {
        if agent >= 2 {
            return suffix.clone();
        }
        match block {
            None => vec![0; m],
            Some(t) => (0..m).map(|j| u64::from(j / block_width == t)).collect(),
        }
    };
    let build = |block: Option<usize>| UtilityProfile::additive(1, (0..n).map(|i| row_for(i, block)).collect());
    let base = build(None)?;
    let members = (0..t_count).map(|t| build(Some(t))).collect::<Result<Vec<_>>>()?;
    Ok(PackingFamily { notion, n, m, c, t_count, block_width, base, members })
}

/// Base profile plus `T` members in which agents 1 and 2 value one
/// width-`2c+1` block each; the other agents value the last `(c+1)(n-2)+1` items.
pub fn ef_packing_family(n: usize, m: usize, c: usize, t_count: usize) -> Result<PackingFamily> {
    packing_family(FairnessNotion::Ef, n, m, c, t_count)
}

/// As [`ef_packing_family`] with block width `nc+1` and a suffix of `cn+1` items.
pub fn prop_packing_family(n: usize, m: usize, c: usize, t_count: usize) -> Result<PackingFamily> {
    packing_family(FairnessNotion::Prop, n, m, c, t_count)
}

/// `floor(0.01 sqrt(m/n))`.
pub fn agent_level_prop_default_c(n: usize, m: usize) -> usize {
    (ZETA * (m as f64 / n as f64).sqrt()).floor() as usize
}

/// `floor(0.01 sqrt((m/n) min{ln n, m/n}))`.
pub fn agent_level_ef_default_c(n: usize, m: usize) -> usize {
    let ratio = m as f64 / n as f64;
    (ZETA * (ratio * (n as f64).ln().min(ratio)).sqrt()).floor().max(0.0) as usize
}

/// Fixed connected allocation for the random-utility experiments: agent 0
/// takes the first `bundle_size` items and the rest are split as evenly as
/// possible, in order, among the other agents.
pub fn designated_allocation(n: usize, m: usize, bundle_size: usize) -> Result<ConnectedAllocation> {
    check_shape(n, m)?;
    if bundle_size > m || (n == 1 && bundle_size != m) {
        return Err(Error::InvalidParameter(format!("bundle of {bundle_size} items does not fit n = {n}, m = {m}")));
    }
    let mut spans = vec![(bundle_size > 0).then_some(Span { start: 0, end: bundle_size })];
    let rest = m - bundle_size;
    let others = n - 1;
    let mut start = bundle_size;
    for k in 0..others {
        let len = rest / others + usize::from(k < rest % others);
        spans.push((len > 0).then_some(Span { start, end: start + len }));
        start += len;
    }
    ConnectedAllocation::new(m, spans)
}

/// Number of other agents whose bundle is at least as large as agent `i`'s.
pub fn rank(allocation: &impl Bundles, agent: usize) -> usize {
    let bundles = allocation.bundles();
    let own = bundles[agent].len();
    bundles.iter().enumerate().filter(|&(j, b)| j != agent && b.len() >= own).count()
}

/// Monte-Carlo frequency, over random binary utilities, with which the
/// [`designated_allocation`] fails PROP-`c` (or EF-`c`) for agent 0.
///
/// Only agent 0's row influences the event, so only that row is drawn;
/// trial `t` uses `stream.substream(t)`. The PROP variant requires
/// `bundle_size <= m / n`; the EF variant requires agent 0 to have rank at
/// least `(n - 1) / 2`.
pub fn small_bundle_profile_experiment(
    notion: FairnessNotion,
    n: usize,
    m: usize,
    bundle_size: usize,
    c: usize,
    trials: u64,
    stream: &RandomStream,
) -> Result<RateEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let allocation = designated_allocation(n, m, bundle_size)?;
    match notion {
        FairnessNotion::Prop if bundle_size * n > m => {
            return Err(Error::InvalidParameter(format!("bundle of {bundle_size} items exceeds m / n")));
        }
        FairnessNotion::Ef if 2 * rank(&allocation, 0) < n - 1 => {
            return Err(Error::InvalidParameter("agent 0 must have rank at least (n - 1) / 2".into()));
        }
        _ => {}
    }
    let spans: Vec<std::ops::Range<usize>> =
        allocation.spans().iter().map(|s| s.map_or(0..0, |s| s.items())).collect();
    let mut failures = 0;
    for t in 0..trials {
        let words = coin_words(&mut stream.substream(t), m);
        let own = ones_in(&words, spans[0].clone());
        let failed = match notion {
            FairnessNotion::Prop => {
                let total = ones_in(&words, 0..m);
                let outside = total - own;
                n * (own + c.min(outside)) < total
            }
            FairnessNotion::Ef => spans[1..].iter().any(|r| {
                let other = ones_in(&words, r.clone());
                own < other - c.min(other)
            }),
        };
        failures += u64::from(failed);
    }
    Ok(RateEstimate::new(failures, trials))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    pub agent: usize,
    /// The agent's utilities; every other agent is all-zero.
    pub profile: UtilityProfile,
    /// Fraction of the sampled outputs on the all-zero input that fail the
    /// notion for `agent` under `profile`.
    pub failure_rate: f64,
    pub samples: usize,
    pub candidates: usize,
}

/// Searches for a single-agent deviation from the all-zero profile that
/// the mechanism's output on the all-zero profile often treats unfairly.
///
/// Draws `samples` outputs of `mechanism` on the all-zero input (sample `s`
/// gets `stream.substream(s)`), then scores `candidates` random binary rows
/// for every agent and keeps the row with the highest failure rate.
pub fn agent_level_witness_search<M>(
    mut mechanism: M,
    notion: FairnessNotion,
    n: usize,
    m: usize,
    c: usize,
    samples: usize,
    candidates: usize,
    stream: &RandomStream,
) -> Result<WitnessSearch>
where
    M: FnMut(&UtilityProfile, &mut RandomStream) -> Result<ConnectedAllocation>,
{
    if samples == 0 || candidates == 0 {
        return Err(Error::InvalidParameter("samples and candidates must be positive".into()));
    }
    let base = all_zero_profile(n, m)?;
    let outputs = (0..samples)
        .map(|s| mechanism(&base, &mut stream.substream(s as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut row_stream = stream.substream(u64::MAX);
    let mut best: Option<WitnessSearch> = None;
    for _ in 0..candidates {
        let row = bernoulli_profile(1, m, &mut row_stream)?.row(0).to_vec();
        for agent in 0..n {
            let mut values = vec![vec![0; m]; n];
            values[agent] = row.clone();
            let profile = UtilityProfile::additive(1, values)?;
            let mut fails = 0usize;
            for a in &outputs {
                if !fair_for_agent(&profile, a, agent, notion, c)? {
                    fails += 1;
                }
            }
            let failure_rate = fails as f64 / samples as f64;
            if best.as_ref().is_none_or(|b| failure_rate > b.failure_rate) {
                best = Some(WitnessSearch { agent, profile, failure_rate, samples, candidates });
            }
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// EF-`c` or PROP-`c` for a single agent.
pub fn fair_for_agent(
    profile: &UtilityProfile,
    allocation: &impl Bundles,
    agent: usize,
    notion: FairnessNotion,
    c: usize,
) -> Result<bool> {
    let bundles = allocation.bundles();
    let own = profile.bundle_value(agent, &bundles[agent])?;
    Ok(match notion {
        FairnessNotion::Ef => {
            for (j, b) in bundles.iter().enumerate() {
                if j != agent && own < profile.truncated_value(agent, b, c)? {
                    return Ok(false);
                }
            }
            true
        }
        FairnessNotion::Prop => {
            let outside: Vec<usize> = (0..profile.m()).filter(|j| !bundles[agent].contains(j)).collect();
            let all: Vec<usize> = (0..profile.m()).collect();
            let n = profile.n() as u128;
            n * own + n * profile.top_k_value(agent, &outside, c)? >= profile.bundle_value(agent, &all)?
        }
    })
}
