use thiserror::Error;

/// Errors raised by the allocation, mechanism and audit routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("agent index {agent} out of range for {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    #[error("item index {item} out of range for {m} items")]
    ItemOutOfRange { item: usize, m: usize },

    #[error("invalid utility profile: {0}")]
    InvalidProfile(String),

    #[error("profile shapes differ: {0}")]
    ShapeMismatch(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid item range {lo}..{hi} with cut {cut}")]
    InvalidRange { lo: usize, hi: usize, cut: usize },

    #[error("candidate set of {count} connected allocations exceeds the enumeration cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("operation requires additive utilities")]
    RequiresAdditive,

    #[error("empty candidate list")]
    EmptyCandidates,
}

pub type Result<T> = std::result::Result<T, Error>;
