//! Private moving-knife allocator for PROP-c under additive utilities.
//!
//! Each call on a group `I` of agents and an item range lets every agent
//! pick a knife position with AboveThreshold, sorts the positions, and
//! recurses with the left half of the agents on the items left of the
//! median position and the right half on the rest. Calls at recursion
//! level `b = ceil(log2 |I|)` spend `epsilon / (2 * 1.5^b)`; each agent's
//! row feeds only its own AboveThreshold run and only one branch, so the
//! levels compose to at most `epsilon` overall.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::allocation::{ConnectedAllocation, Span};
use crate::error::{Error, Result};
use crate::mechanisms::above_threshold;
use crate::params::PrivacyParams;
use crate::profile::{SortedBundle, UtilityProfile};
use crate::rng::RandomStream;

/// Recursion level of a group of `size >= 2` agents: `ceil(log2 size)`.
pub fn recursion_level(size: usize) -> u32 {
    usize::BITS - (size - 1).leading_zeros()
}

/// Share of the total budget spent at `level`, `2^(b-1) / 3^b`, exactly.
pub fn level_budget_share(level: u32) -> Ratio<u128> {
    Ratio::new(1u128 << (level - 1), 3u128.pow(level))
}

/// `epsilon / (2 * 1.5^b)`.
pub fn level_epsilon(epsilon: f64, level: u32) -> f64 {
    epsilon / (2.0 * 1.5f64.powi(level as i32))
}

/// `8 * ceil(svt_constant * ln(mn / beta) / level_epsilon)`.
pub fn level_truncation(m: usize, n: usize, params: &PrivacyParams, level: u32) -> u64 {
    let eps_b = level_epsilon(params.epsilon, level);
    let log_term = ((m as f64) * (n as f64) / params.beta).ln();
    8 * (params.svt_constant * log_term / eps_b).ceil().max(0.0) as u64
}

/// Knife-position score of one agent for cutting `range` at `cut`.
///
/// Largest `t` in `1..=g` with
/// `n_right * u^{-(g+t)}(range.start..cut) >= n_left * u^{-(g-t)}(cut..range.end)`,
/// or 0 when none qualifies. Requires `range.start < cut <= range.end`.
pub fn f_value(
    profile: &UtilityProfile,
    agent: usize,
    range: Range<usize>,
    cut: usize,
    g: u64,
    n_left: usize,
    n_right: usize,
) -> Result<u64> {
    if !profile.is_additive() {
        return Err(Error::RequiresAdditive);
    }
    profile.check_agent(agent)?;
    if !(range.start < cut && cut <= range.end && range.end <= profile.m()) {
        return Err(Error::InvalidRange { lo: range.start, hi: range.end, cut });
    }
    if g == 0 || n_left == 0 || n_right == 0 {
        return Err(Error::InvalidParameter("f needs g, n_left and n_right to be positive".into()));
    }
    Ok(row_f_value(profile.row(agent), range, cut, g, n_left, n_right))
}

fn row_f_value(row: &[u64], range: Range<usize>, cut: usize, g: u64, n_left: usize, n_right: usize) -> u64 {
    let left = SortedBundle::new(row[range.start..cut].iter().copied());
    let right = SortedBundle::new(row[cut..range.end].iter().copied());
    let (nl, nr) = (n_left as u128, n_right as u128);
    let g_us = g as usize;
    (1..=g)
        .rev()
        .find(|&t| nr * left.truncated(g_us + t as usize) >= nl * right.truncated(g_us - t as usize))
        .unwrap_or(0)
}

/// One agent's knife position inside a recursion node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCut {
    pub agent: usize,
    /// Position chosen by AboveThreshold, if any query crossed the threshold.
    pub selected: Option<usize>,
    /// Position used for sorting; the range end when nothing was selected.
    pub cut: usize,
    pub queries: usize,
}

/// Record of one recursive call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnifeNode {
    /// Heap numbering: root 1, children `2id` and `2id + 1`.
    pub id: u64,
    pub depth: u32,
    pub agents: Vec<usize>,
    pub start: usize,
    pub end: usize,
    /// `ceil(log2 |agents|)`; 0 for leaves.
    pub level: u32,
    pub epsilon: f64,
    pub g: u64,
    pub n_left: usize,
    pub n_right: usize,
    pub cuts: Vec<AgentCut>,
    pub split: Option<usize>,
    pub left_agents: Vec<usize>,
    pub right_agents: Vec<usize>,
    /// Profile rows read while computing this node's knife positions.
    pub rows_read: Vec<usize>,
}

impl KnifeNode {
    pub fn is_leaf(&self) -> bool {
        self.agents.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnifeTrace {
    pub epsilon: f64,
    pub nodes: Vec<KnifeNode>,
}

impl KnifeTrace {
    pub fn levels(&self) -> BTreeSet<u32> {
        self.nodes.iter().filter(|v| !v.is_leaf()).map(|v| v.level).collect()
    }

    /// Sum of per-level budget shares over distinct levels, as a fraction of epsilon.
    pub fn budget_share(&self) -> Ratio<u128> {
        self.levels().into_iter().map(level_budget_share).fold(Ratio::from_integer(0), |a, b| a + b)
    }

    /// `(level, epsilon_b)` pairs, one per distinct level.
    pub fn budget_ledger(&self) -> Vec<(u32, f64)> {
        let mut ledger = BTreeMap::new();
        for v in self.nodes.iter().filter(|v| !v.is_leaf()) {
            ledger.insert(v.level, v.epsilon);
        }
        ledger.into_iter().collect()
    }

    /// Removal count under which the output is proportional whenever every
    /// AboveThreshold call met its accuracy bound: the largest over agents of
    /// `sum ceil(2 g_b / |I|)` across the internal nodes containing them.
    pub fn proportionality_bound(&self) -> usize {
        let mut per_agent: BTreeMap<usize, u64> = BTreeMap::new();
        for v in self.nodes.iter().filter(|v| !v.is_leaf()) {
            let size = v.agents.len() as u64;
            for &a in &v.agents {
                *per_agent.entry(a).or_default() += (2 * v.g).div_ceil(size);
            }
        }
        per_agent.values().copied().max().unwrap_or(0) as usize
    }

    pub fn leaves(&self) -> impl Iterator<Item = &KnifeNode> {
        self.nodes.iter().filter(|v| v.is_leaf())
    }
}

struct Knife<'a> {
    profile: &'a UtilityProfile,
    params: PrivacyParams,
    stream: &'a RandomStream,
    spans: Vec<Option<Span>>,
    nodes: Vec<KnifeNode>,
}

impl Knife<'_> {
    fn run(&mut self, id: u64, depth: u32, agents: Vec<usize>, start: usize, end: usize) -> Result<()> {
        if agents.len() == 1 {
            self.spans[agents[0]] = (start < end).then_some(Span { start, end });
            self.nodes.push(KnifeNode {
                id,
                depth,
                agents,
                start,
                end,
                level: 0,
                epsilon: 0.0,
                g: 0,
                n_left: 0,
                n_right: 0,
                cuts: Vec::new(),
                split: None,
                left_agents: Vec::new(),
                right_agents: Vec::new(),
                rows_read: Vec::new(),
            });
            return Ok(());
        }
        let size = agents.len();
        let level = recursion_level(size);
        let n_right = size / 2;
        let n_left = size - n_right;
        let eps_b = level_epsilon(self.params.epsilon, level);
        let g = level_truncation(self.profile.m(), self.profile.n(), &self.params, level);
        let node_stream = self.stream.substream(id);

        let mut cuts = Vec::with_capacity(size);
        for &agent in &agents {
            let mut s = node_stream.substream(agent as u64);
            let row = self.profile.row(agent);
            let queries = (start + 1..=end).map(|cut| row_f_value(row, start..end, cut, g, n_left, n_right) as f64);
            let out = above_threshold(&mut s, queries, (g / 2) as f64, eps_b)?;
            let selected = out.selected.map(|p| start + 1 + p);
            cuts.push(AgentCut { agent, selected, cut: selected.unwrap_or(end), queries: out.consumed });
        }
        let mut order: Vec<(usize, usize)> = cuts.iter().map(|c| (c.cut, c.agent)).collect();
        order.sort_unstable();
        let split = order[n_left - 1].0;
        let left_agents: Vec<usize> = order[..n_left].iter().map(|&(_, a)| a).collect();
        let right_agents: Vec<usize> = order[n_left..].iter().map(|&(_, a)| a).collect();

        self.nodes.push(KnifeNode {
            id,
            depth,
            rows_read: agents.clone(),
            agents,
            start,
            end,
            level,
            epsilon: eps_b,
            g,
            n_left,
            n_right,
            cuts,
            split: Some(split),
            left_agents: left_agents.clone(),
            right_agents: right_agents.clone(),
        });
        self.run(2 * id, depth + 1, left_agents, start, split)?;
        self.run(2 * id + 1, depth + 1, right_agents, split, end)
    }
}

/// Runs the private moving knife on all agents and items.
///
/// Randomness for the AboveThreshold run of agent `a` at node `id` comes
/// from `stream.substream(id).substream(a)`, so the output does not depend
/// on evaluation order.
pub fn dp_moving_knife(
    profile: &UtilityProfile,
    params: &PrivacyParams,
    stream: &RandomStream,
) -> Result<(ConnectedAllocation, KnifeTrace)> {
    params.validate()?;
    if !profile.is_additive() {
        return Err(Error::RequiresAdditive);
    }
    let mut knife = Knife { profile, params: *params, stream, spans: vec![None; profile.n()], nodes: Vec::new() };
    knife.run(1, 0, (0..profile.n()).collect(), 0, profile.m())?;
    let allocation = ConnectedAllocation::new(profile.m(), knife.spans)?;
    Ok((allocation, KnifeTrace { epsilon: params.epsilon, nodes: knife.nodes }))
}
