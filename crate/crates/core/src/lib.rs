//! Differentially private fair division of items on a line.
//!
//! Agents and items are 0-based in this crate; spans are half-open.

pub mod allocation;
pub mod audit;
pub mod ef_em;
pub mod error;
pub mod fairness;
pub mod generators;
pub mod knife;
pub mod mechanisms;
pub mod oracles;
pub mod params;
pub mod profile;
pub mod rng;

pub use allocation::{
    connected_allocation_count, enumerate_connected_allocations, Allocation, Bundles, ConnectedAllocation, Span,
};
pub use ef_em::{dp_ef_allocate, dp_ef_allocate_with_cap, score, truncation_budget, EfRunReport, PreparedEf};
pub use error::{Error, Result};
pub use fairness::{ef_degree, is_ef_c, is_ef_d_wrt_truncated, is_prop_c, prop_degree};
pub use generators::FairnessNotion;
pub use knife::{dp_moving_knife, KnifeTrace};
pub use params::{Adjacency, PrivacyParams};
pub use profile::{adjacency_distance, UtilityKind, UtilityProfile};
pub use rng::RandomStream;
