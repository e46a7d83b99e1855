//! Allocations of the item line and enumeration of connected allocations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open run of items `start..end`, never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn items(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Read access to the bundles of an allocation.
pub trait Bundles {
    fn agent_count(&self) -> usize;
    fn item_count(&self) -> usize;
    fn bundle(&self, agent: usize) -> Vec<usize>;

    fn bundles(&self) -> Vec<Vec<usize>> {
        (0..self.agent_count()).map(|i| self.bundle(i)).collect()
    }
}

/// Every agent receives one (possibly empty) interval of the item line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConnectedAllocation {
    m: usize,
    spans: Vec<Option<Span>>,
}

impl ConnectedAllocation {
    /// Validates that the nonempty spans tile `0..m` exactly.
    pub fn new(m: usize, spans: Vec<Option<Span>>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::InvalidAllocation("at least one agent is required".into()));
        }
        let mut present: Vec<Span> = spans.iter().flatten().copied().collect();
        if let Some(bad) = present.iter().find(|s| s.is_empty() || s.end > m) {
            return Err(Error::InvalidAllocation(format!("span {}..{} is invalid for {m} items", bad.start, bad.end)));
        }
        present.sort();
        let mut next = 0;
        for s in &present {
            if s.start != next {
                return Err(Error::InvalidAllocation(format!(
                    "spans do not tile the line: expected a span starting at {next}, found {}..{}",
                    s.start, s.end
                )));
            }
            next = s.end;
        }
        if next != m {
            return Err(Error::InvalidAllocation(format!("spans cover 0..{next}, expected 0..{m}")));
        }
        Ok(Self { m, spans })
    }

    /// Builds the allocation without validation; callers guarantee tiling.
    pub(crate) fn from_spans_unchecked(m: usize, spans: Vec<Option<Span>>) -> Self {
        debug_assert!(Self::new(m, spans.clone()).is_ok());
        Self { m, spans }
    }

    pub fn spans(&self) -> &[Option<Span>] {
        &self.spans
    }

    pub fn span(&self, agent: usize) -> Option<Span> {
        self.spans[agent]
    }

    pub fn to_owners(&self) -> Allocation {
        let mut owner = vec![0; self.m];
        for (i, s) in self.spans.iter().enumerate() {
            if let Some(s) = s {
                owner[s.items()].iter_mut().for_each(|o| *o = i);
            }
        }
        Allocation { n: self.spans.len(), owner }
    }
}

/// 1-based inclusive intervals, `-` for an empty bundle: `[1-2, -, 3-5]`.
impl std::fmt::Display for ConnectedAllocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.spans.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match s {
                Some(s) => write!(f, "{}-{}", s.start + 1, s.end)?,
                None => f.write_str("-")?,
            }
        }
        f.write_str("]")
    }
}

impl Bundles for ConnectedAllocation {
    fn agent_count(&self) -> usize {
        self.spans.len()
    }

    fn item_count(&self) -> usize {
        self.m
    }

    fn bundle(&self, agent: usize) -> Vec<usize> {
        self.spans[agent].map(|s| s.items().collect()).unwrap_or_default()
    }
}

/// Arbitrary assignment of items to agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation {
    n: usize,
    owner: Vec<usize>,
}

impl Allocation {
    pub fn new(n: usize, owner: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAllocation("at least one agent is required".into()));
        }
        if let Some((j, &o)) = owner.iter().enumerate().find(|(_, &o)| o >= n) {
            return Err(Error::InvalidAllocation(format!("item {j} assigned to agent {o}, but n = {n}")));
        }
        Ok(Self { n, owner })
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }
}

impl Bundles for Allocation {
    fn agent_count(&self) -> usize {
        self.n
    }

    fn item_count(&self) -> usize {
        self.owner.len()
    }

    fn bundle(&self, agent: usize) -> Vec<usize> {
        self.owner.iter().enumerate().filter(|(_, &o)| o == agent).map(|(j, _)| j).collect()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of distinct connected allocations of `m` items among `n` agents:
/// `sum_k C(n,k) k! C(m-1,k-1)`, saturating at `u128::MAX`.
pub fn connected_allocation_count(m: usize, n: usize) -> u128 {
    if m == 0 {
        return 1;
    }
    let (m, n) = (m as u128, n as u128);
    (1..=n.min(m)).fold(0u128, |acc, k| {
        let falling = (0..k).fold(1u128, |f, i| f.saturating_mul(n - i));
        acc.saturating_add(falling.saturating_mul(binomial(m - 1, k - 1)))
    })
}

/// Enumerates each connected allocation of `m` items among `n` agents once.
///
/// Allocations are grouped by the number `k` of nonempty bundles; within a
/// group the cut positions advance in lexicographic order and, for each cut
/// pattern, every ordered choice of `k` distinct agents is emitted.
pub fn enumerate_connected_allocations(m: usize, n: usize) -> ConnectedAllocations {
    ConnectedAllocations::new(m, n)
}

pub struct ConnectedAllocations {
    m: usize,
    n: usize,
    k: usize,
    cuts: Vec<usize>,
    perms: Vec<Vec<usize>>,
    perm: usize,
    done: bool,
}

impl ConnectedAllocations {
    fn new(m: usize, n: usize) -> Self {
        let mut it = Self { m, n, k: 0, cuts: Vec::new(), perms: Vec::new(), perm: 0, done: n == 0 };
        if m > 0 && n > 0 {
            it.start_group(1);
        }
        it
    }

    fn start_group(&mut self, k: usize) {
        self.k = k;
        self.cuts = (1..k).collect();
        self.perms = k_permutations(self.n, k);
        self.perm = 0;
    }

    fn advance_cuts(&mut self) -> bool {
        let r = self.cuts.len();
        let top = self.m - 1;
        for i in (0..r).rev() {
            if self.cuts[i] < top - (r - 1 - i) {
                self.cuts[i] += 1;
                for t in i + 1..r {
                    self.cuts[t] = self.cuts[t - 1] + 1;
                }
                return true;
            }
        }
        false
    }

    fn current(&self) -> ConnectedAllocation {
        let mut spans = vec![None; self.n];
        let agents = &self.perms[self.perm];
        let mut start = 0;
        for (t, &agent) in agents.iter().enumerate() {
            let end = self.cuts.get(t).copied().unwrap_or(self.m);
            spans[agent] = Some(Span { start, end });
            start = end;
        }
        ConnectedAllocation::from_spans_unchecked(self.m, spans)
    }
}

impl Iterator for ConnectedAllocations {
    type Item = ConnectedAllocation;

    fn next(&mut self) -> Option<ConnectedAllocation> {
        if self.done {
            return None;
        }
        if self.m == 0 {
            self.done = true;
            return Some(ConnectedAllocation::from_spans_unchecked(0, vec![None; self.n]));
        }
        let out = self.current();
        self.perm += 1;
        if self.perm == self.perms.len() {
            self.perm = 0;
            if !self.advance_cuts() {
                if self.k < self.n.min(self.m) {
                    self.start_group(self.k + 1);
                } else {
                    self.done = true;
                }
            }
        }
        Some(out)
    }
}

/// All ordered selections of `k` distinct values from `0..n`.
fn k_permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn fill(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                fill(n, k, cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    fill(n, k, &mut Vec::with_capacity(k), &mut vec![false; n], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Every owner vector whose bundles are intervals, found by brute force.
    fn brute_connected(m: usize, n: usize) -> HashSet<Vec<usize>> {
        let total = n.pow(m as u32);
        (0..total)
            .map(|mut code| {
                (0..m)
                    .map(|_| {
                        let o = code % n;
                        code /= n;
                        o
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|owner| {
                (0..n).all(|i| {
                    let pos: Vec<usize> = (0..m).filter(|&j| owner[j] == i).collect();
                    pos.windows(2).all(|w| w[1] == w[0] + 1)
                })
            })
            .collect()
    }

    #[test]
    fn small_counts() {
        assert_eq!(enumerate_connected_allocations(1, 1).count(), 1);
        assert_eq!(enumerate_connected_allocations(2, 2).count(), 4);
        assert_eq!(enumerate_connected_allocations(3, 2).count(), 6);
        assert_eq!(connected_allocation_count(3, 2), 6);
        assert_eq!(connected_allocation_count(12, 3), 399);
        let empty: Vec<_> = enumerate_connected_allocations(0, 3).collect();
        assert_eq!(empty.len(), 1);
        assert!(empty[0].spans().iter().all(Option::is_none));
    }

    #[test]
    fn enumeration_is_exact_and_distinct() {
        for m in 0..=6 {
            for n in 1..=4 {
                let listed: Vec<Vec<usize>> =
                    enumerate_connected_allocations(m, n).map(|a| a.to_owners().owners().to_vec()).collect();
                let distinct: HashSet<Vec<usize>> = listed.iter().cloned().collect();
                assert_eq!(distinct.len(), listed.len(), "duplicates at m={m} n={n}");
                assert_eq!(listed.len() as u128, connected_allocation_count(m, n));
                assert_eq!(distinct, brute_connected(m, n), "m={m} n={n}");
            }
        }
    }

    #[test]
    fn validation() {
        let ok = ConnectedAllocation::new(3, vec![Some(Span { start: 0, end: 1 }), Some(Span { start: 1, end: 3 })]);
        assert!(ok.is_ok());
        let gap = ConnectedAllocation::new(3, vec![Some(Span { start: 0, end: 1 }), Some(Span { start: 2, end: 3 })]);
        assert!(gap.is_err());
        let overlap = ConnectedAllocation::new(3, vec![Some(Span { start: 0, end: 2 }), Some(Span { start: 1, end: 3 })]);
        assert!(overlap.is_err());
        let short = ConnectedAllocation::new(3, vec![Some(Span { start: 0, end: 2 }), None]);
        assert!(short.is_err());
        assert!(ConnectedAllocation::new(0, vec![None, None]).is_ok());
        assert!(Allocation::new(2, vec![0, 2]).is_err());
    }

    #[test]
    fn owners_round_trip() {
        let a = ConnectedAllocation::new(4, vec![Some(Span { start: 1, end: 4 }), None, Some(Span { start: 0, end: 1 })])
            .unwrap();
        let owners = a.to_owners();
        assert_eq!(owners.owners(), &[2, 0, 0, 0]);
        assert_eq!(owners.bundles(), a.bundles());
    }
}
