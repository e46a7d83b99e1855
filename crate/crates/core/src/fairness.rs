//! Envy-freeness and proportionality checkers, exact in scaled integers.
//!
//! With a single agent every allocation is trivially fair, and the empty
//! instance (`m = 0`) is fair under every notion.

use crate::allocation::Bundles;
use crate::error::{Error, Result};
use crate::profile::{SortedBundle, UtilityProfile};

/// Per-allocation cache of the quantities the checkers compare.
pub(crate) struct BundleTable<'a> {
    profile: &'a UtilityProfile,
    bundles: Vec<Vec<usize>>,
    // sorted[i][j]: agent i's additive values over bundle j (additive only).
    sorted: Option<Vec<Vec<SortedBundle>>>,
}

impl<'a> BundleTable<'a> {
    pub(crate) fn new(profile: &'a UtilityProfile, allocation: &impl Bundles) -> Result<Self> {
        if allocation.agent_count() != profile.n() || allocation.item_count() != profile.m() {
            return Err(Error::ShapeMismatch(format!(
                "allocation for {} agents and {} items, profile has {} agents and {} items",
                allocation.agent_count(),
                allocation.item_count(),
                profile.n(),
                profile.m()
            )));
        }
        let bundles = allocation.bundles();
        let sorted = profile.is_additive().then(|| {
            (0..profile.n())
                .map(|i| bundles.iter().map(|b| profile.sorted_bundle(i, b)).collect())
                .collect()
        });
        Ok(Self { profile, bundles, sorted })
    }

    pub(crate) fn n(&self) -> usize {
        self.bundles.len()
    }

    /// `u_i^{-k}(A_j)`, scaled.
    pub(crate) fn truncated(&self, i: usize, j: usize, k: usize) -> u128 {
        match &self.sorted {
            Some(s) => s[i][j].truncated(k),
            None => self.profile.truncated_value(i, &self.bundles[j], k).expect("validated indices"),
        }
    }

    fn bundle_len(&self, j: usize) -> usize {
        self.bundles[j].len()
    }

    fn complement(&self, i: usize) -> Vec<usize> {
        let own = &self.bundles[i];
        (0..self.profile.m()).filter(|j| !own.contains(j)).collect()
    }

    fn prop_slack(&self, i: usize, c: usize, outside: &[usize], total: u128) -> bool {
        let n = self.n() as u128;
        let own = self.truncated(i, i, 0);
        let extra = self.profile.top_k_value(i, outside, c).expect("validated indices");
        n * own + n * extra >= total
    }
}

/// `A` is EF-`d` with respect to the `k`-truncated utilities, in collapsed form:
/// `u_i^{-k}(A_i) >= u_i^{-(d+k)}(A_{i'})` for every ordered pair.
pub fn is_ef_d_wrt_truncated(
    profile: &UtilityProfile,
    allocation: &impl Bundles,
    d: usize,
    k: usize,
) -> Result<bool> {
    let table = BundleTable::new(profile, allocation)?;
    Ok(ef_truncated(&table, d, k))
}

pub(crate) fn ef_truncated(table: &BundleTable<'_>, d: usize, k: usize) -> bool {
    let n = table.n();
    (0..n).all(|i| {
        let own = table.truncated(i, i, k);
        (0..n).filter(|&o| o != i).all(|o| own >= table.truncated(i, o, d + k))
    })
}

/// Envy-freeness up to `c` items.
pub fn is_ef_c(profile: &UtilityProfile, allocation: &impl Bundles, c: usize) -> Result<bool> {
    is_ef_d_wrt_truncated(profile, allocation, c, 0)
}

/// Proportionality up to `c` items, checked as
/// `n u_i(A_i) + n max_{|S|<=c, S outside A_i} u_i(S) >= u_i(M)`.
pub fn is_prop_c(profile: &UtilityProfile, allocation: &impl Bundles, c: usize) -> Result<bool> {
    let table = BundleTable::new(profile, allocation)?;
    let all: Vec<usize> = (0..profile.m()).collect();
    Ok((0..table.n()).all(|i| {
        let total = profile.bundle_value_unchecked(i, &all);
        table.prop_slack(i, c, &table.complement(i), total)
    }))
}

/// Smallest `c` for which the allocation is EF-`c`.
pub fn ef_degree(profile: &UtilityProfile, allocation: &impl Bundles) -> Result<usize> {
    let table = BundleTable::new(profile, allocation)?;
    let n = table.n();
    let mut degree = 0;
    for i in 0..n {
        let own = table.truncated(i, i, 0);
        for o in (0..n).filter(|&o| o != i) {
            // truncation is nonincreasing in c, so the first hit is minimal
            let need = (degree..=table.bundle_len(o))
                .find(|&c| own >= table.truncated(i, o, c))
                .unwrap_or(degree);
            degree = degree.max(need);
        }
    }
    Ok(degree)
}

/// Smallest `c` for which the allocation is PROP-`c`.
///
/// `None` when no `c` suffices, which can only happen for superadditive
/// general utilities where `u_i(A_i) + u_i(M \ A_i) < u_i(M) / n`.
pub fn prop_degree(profile: &UtilityProfile, allocation: &impl Bundles) -> Result<Option<usize>> {
    let table = BundleTable::new(profile, allocation)?;
    let all: Vec<usize> = (0..profile.m()).collect();
    let mut degree = 0;
    for i in 0..table.n() {
        let total = profile.bundle_value_unchecked(i, &all);
        let outside = table.complement(i);
        match (degree.min(outside.len())..=outside.len()).find(|&c| table.prop_slack(i, c, &outside, total)) {
            Some(need) => degree = degree.max(need),
            None => return Ok(None),
        }
    }
    Ok(Some(degree))
}
