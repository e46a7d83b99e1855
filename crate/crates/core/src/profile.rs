//! Exact utility model.
//!
//! Utilities are stored as nonnegative integers sharing one denominator
//! (`scale`), so every fairness comparison reduces to integer arithmetic.
//! Items and agents are 0-based inside the library; the command-line layer
//! converts to 1-based item indices on the way in and out.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Adjacency;

/// Largest item count for which explicit set-function tables are accepted.
pub const MAX_GENERAL_ITEMS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Additive,
    General,
}

/// Utilities of `n` agents over `m` items on a line.
///
/// For [`UtilityKind::General`] profiles every agent carries a table of
/// `2^m` entries indexed by item bitmask (bit `j` is item `j`), and
/// `values[i][j]` mirrors the singleton entry `table[1 << j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct UtilityProfile {
    n: usize,
    m: usize,
    scale: u64,
    values: Vec<Vec<u64>>,
    tables: Option<Vec<Vec<u64>>>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    n: usize,
    m: usize,
    scale: u64,
    kind: UtilityKind,
    values: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tables: Option<Vec<Vec<u64>>>,
}

impl TryFrom<ProfileRepr> for UtilityProfile {
    type Error = Error;

    fn try_from(r: ProfileRepr) -> Result<Self> {
        let profile = match (r.kind, r.tables) {
            (UtilityKind::Additive, None) => Self::additive(r.scale, r.values)?,
            (UtilityKind::General, Some(tables)) => {
                let profile = Self::general(r.scale, r.m, tables)?;
                if profile.values != r.values {
                    return Err(Error::InvalidProfile("values must equal the singleton table entries".into()));
                }
                profile
            }
            (UtilityKind::Additive, Some(_)) => {
                return Err(Error::InvalidProfile("additive profiles carry no tables".into()));
            }
            (UtilityKind::General, None) => return Err(Error::InvalidProfile("general profiles need tables".into())),
        };
        if profile.n != r.n || profile.m != r.m {
            return Err(Error::InvalidProfile(format!(
                "declared {}x{} but the data is {}x{}",
                r.n, r.m, profile.n, profile.m
            )));
        }
        Ok(profile)
    }
}

impl From<UtilityProfile> for ProfileRepr {
    fn from(p: UtilityProfile) -> Self {
        let kind = p.kind();
        Self { n: p.n, m: p.m, scale: p.scale, kind, values: p.values, tables: p.tables }
    }
}

impl UtilityProfile {
    /// Builds an additive profile from an `n x m` matrix of scaled values.
    pub fn additive(scale: u64, values: Vec<Vec<u64>>) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidProfile("scale must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidProfile("at least one agent is required".into()));
        }
        let m = values[0].len();
        if let Some((i, row)) = values.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::InvalidProfile(format!(
                "row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        Ok(Self { n: values.len(), m, scale, values, tables: None })
    }

    /// Binary profile with `scale = 1`.
    pub fn binary(rows: &[Vec<bool>]) -> Result<Self> {
        let values = rows.iter().map(|r| r.iter().map(|&b| u64::from(b)).collect()).collect();
        Self::additive(1, values)
    }

    /// The all-zero profile over `n` agents and `m` items.
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        Self::additive(1, vec![vec![0; m]; n])
    }

    /// Builds a general monotone profile from explicit set-function tables.
    pub fn general(scale: u64, m: usize, tables: Vec<Vec<u64>>) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidProfile("scale must be positive".into()));
        }
        if m > MAX_GENERAL_ITEMS {
            return Err(Error::InvalidProfile(format!(
                "general utilities support at most {MAX_GENERAL_ITEMS} items, got {m}"
            )));
        }
        if tables.is_empty() {
            return Err(Error::InvalidProfile("at least one agent is required".into()));
        }
        let size = 1usize << m;
        for (i, table) in tables.iter().enumerate() {
            if table.len() != size {
                return Err(Error::InvalidProfile(format!(
                    "table {i} has {} entries, expected {size}",
                    table.len()
                )));
            }
            if table[0] != 0 {
                return Err(Error::InvalidProfile(format!("table {i} has nonzero empty-set value")));
            }
            for set in 0..size {
                for j in 0..m {
                    let sup = set | (1 << j);
                    if table[set] > table[sup] {
                        return Err(Error::InvalidProfile(format!(
                            "table {i} is not monotone: value of {set:#b} exceeds {sup:#b}"
                        )));
                    }
                }
            }
        }
        let values = tables.iter().map(|t| (0..m).map(|j| t[1 << j]).collect()).collect();
        Ok(Self { n: tables.len(), m, scale, values, tables: Some(tables) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn kind(&self) -> UtilityKind {
        if self.tables.is_some() {
            UtilityKind::General
        } else {
            UtilityKind::Additive
        }
    }

    pub fn is_additive(&self) -> bool {
        self.tables.is_none()
    }

    /// True for additive profiles whose entries are all `0` or `scale`.
    pub fn is_binary(&self) -> bool {
        self.is_additive() && self.values.iter().flatten().all(|&v| v == 0 || v == self.scale)
    }

    pub fn values(&self) -> &[Vec<u64>] {
        &self.values
    }

    pub fn tables(&self) -> Option<&[Vec<u64>]> {
        self.tables.as_deref()
    }

    pub fn row(&self, agent: usize) -> &[u64] {
        &self.values[agent]
    }

    /// Returns a copy with one additive entry replaced.
    pub fn with_value(&self, agent: usize, item: usize, value: u64) -> Result<Self> {
        if !self.is_additive() {
            return Err(Error::RequiresAdditive);
        }
        self.check_agent(agent)?;
        self.check_item(item)?;
        let mut next = self.clone();
        next.values[agent][item] = value;
        Ok(next)
    }

    pub(crate) fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n {
            return Err(Error::AgentOutOfRange { agent, n: self.n });
        }
        Ok(())
    }

    pub(crate) fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.m {
            return Err(Error::ItemOutOfRange { item, m: self.m });
        }
        Ok(())
    }

    fn check_items(&self, agent: usize, items: &[usize]) -> Result<()> {
        self.check_agent(agent)?;
        items.iter().try_for_each(|&j| self.check_item(j))
    }

    fn mask(items: &[usize]) -> usize {
        items.iter().fold(0, |acc, &j| acc | (1 << j))
    }

    /// Scaled utility of `agent` for `items` (distinct 0-based indices).
    pub fn bundle_value(&self, agent: usize, items: &[usize]) -> Result<u128> {
        self.check_items(agent, items)?;
        Ok(self.bundle_value_unchecked(agent, items))
    }

    pub(crate) fn bundle_value_unchecked(&self, agent: usize, items: &[usize]) -> u128 {
        match &self.tables {
            None => items.iter().map(|&j| u128::from(self.values[agent][j])).sum(),
            Some(t) => u128::from(t[agent][Self::mask(items)]),
        }
    }

    /// Exact utility `u_i(S)`.
    pub fn bundle_utility(&self, agent: usize, items: &[usize]) -> Result<Ratio<u128>> {
        Ok(self.ratio(self.bundle_value(agent, items)?))
    }

    /// Scaled truncated utility: the least value of `items` left after
    /// removing at most `k` items.
    ///
    /// Only removals inside `items` change the bundle, so the general path
    /// minimizes over subsets of `items` of size at most `k`.
    pub fn truncated_value(&self, agent: usize, items: &[usize], k: usize) -> Result<u128> {
        self.check_items(agent, items)?;
        Ok(match &self.tables {
            None => self.sorted_bundle(agent, items).truncated(k),
            Some(t) => {
                let table = &t[agent];
                let full = Self::mask(items);
                submasks(full)
                    .filter(|s| s.count_ones() as usize <= k)
                    .map(|s| u128::from(table[full & !s]))
                    .min()
                    .unwrap_or(0)
            }
        })
    }

    pub fn truncated_utility(&self, agent: usize, items: &[usize], k: usize) -> Result<Ratio<u128>> {
        Ok(self.ratio(self.truncated_value(agent, items, k)?))
    }

    /// Scaled value of the best subset of `items` with at most `k` elements.
    pub fn top_k_value(&self, agent: usize, items: &[usize], k: usize) -> Result<u128> {
        self.check_items(agent, items)?;
        Ok(match &self.tables {
            None => self.sorted_bundle(agent, items).top(k),
            Some(t) => {
                let table = &t[agent];
                submasks(Self::mask(items))
                    .filter(|s| s.count_ones() as usize <= k)
                    .map(|s| u128::from(table[s]))
                    .max()
                    .unwrap_or(0)
            }
        })
    }

    pub fn top_k_utility(&self, agent: usize, items: &[usize], k: usize) -> Result<Ratio<u128>> {
        Ok(self.ratio(self.top_k_value(agent, items, k)?))
    }

    /// Additive values of `items` for `agent`, sorted for truncation queries.
    pub(crate) fn sorted_bundle(&self, agent: usize, items: &[usize]) -> SortedBundle {
        SortedBundle::new(items.iter().map(|&j| self.values[agent][j]))
    }

    fn ratio(&self, scaled: u128) -> Ratio<u128> {
        Ratio::new(scaled, u128::from(self.scale))
    }
}

/// Iterates all submasks of `full`, including `full` and `0`.
pub(crate) fn submasks(full: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(full);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & full) };
        Some(cur)
    })
}

/// Additive item values sorted in decreasing order with prefix sums.
///
/// `top(k)` is the sum of the `k` largest values and `truncated(k)` is
/// `total - top(k)`; both saturate once `k` exceeds the bundle size.
#[derive(Debug, Clone)]
pub struct SortedBundle {
    prefix: Vec<u128>,
}

impl SortedBundle {
    pub fn new(values: impl IntoIterator<Item = u64>) -> Self {
        let mut sorted: Vec<u64> = values.into_iter().collect();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        let mut acc = 0u128;
        prefix.push(0);
        for v in sorted {
            acc += u128::from(v);
            prefix.push(acc);
        }
        Self { prefix }
    }

    pub fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> u128 {
        self.prefix[self.len()]
    }

    pub fn top(&self, k: usize) -> u128 {
        self.prefix[k.min(self.len())]
    }

    pub fn truncated(&self, k: usize) -> u128 {
        self.total() - self.top(k)
    }
}

/// Number of elementary adjacency steps separating two additive profiles.
///
/// Under [`Adjacency::AgentItemLevel`] this counts differing cells, under
/// [`Adjacency::AgentLevel`] differing rows.
pub fn adjacency_distance(p1: &UtilityProfile, p2: &UtilityProfile, notion: Adjacency) -> Result<usize> {
    if !p1.is_additive() || !p2.is_additive() {
        return Err(Error::RequiresAdditive);
    }
    if p1.n != p2.n || p1.m != p2.m || p1.scale != p2.scale {
        return Err(Error::ShapeMismatch(format!(
            "({}, {}, scale {}) vs ({}, {}, scale {})",
            p1.n, p1.m, p1.scale, p2.n, p2.m, p2.scale
        )));
    }
    let rows = p1.values.iter().zip(&p2.values);
    Ok(match notion {
        Adjacency::AgentItemLevel => rows
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum(),
        Adjacency::AgentLevel => rows.filter(|(a, b)| a != b).count(),
    })
}
