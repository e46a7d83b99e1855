use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default constant in the sparse-vector accuracy bound.
pub const DEFAULT_SVT_CONSTANT: f64 = 16.0;

/// Which single change of the input counts as one adjacency step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// One agent's whole utility function may change.
    AgentLevel,
    /// One agent's utility for one item may change.
    AgentItemLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub beta: f64,
    pub adjacency: Adjacency,
    pub svt_constant: f64,
}

impl PrivacyParams {
    /// Agent x item level parameters with the default SVT constant.
    pub fn new(epsilon: f64, beta: f64) -> Result<Self> {
        Self::with_svt_constant(epsilon, beta, DEFAULT_SVT_CONSTANT)
    }

    pub fn with_svt_constant(epsilon: f64, beta: f64, svt_constant: f64) -> Result<Self> {
        let params = Self { epsilon, beta, adjacency: Adjacency::AgentItemLevel, svt_constant };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.svt_constant > 0.0 && self.svt_constant.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "svt constant must be positive, got {}",
                self.svt_constant
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(PrivacyParams::new(1.0, 0.1).is_ok());
        assert!(PrivacyParams::new(1.0, 1.0).is_ok());
        assert!(PrivacyParams::new(0.0, 0.1).is_err());
        assert!(PrivacyParams::new(-1.0, 0.1).is_err());
        assert!(PrivacyParams::new(1.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.5).is_err());
        assert!(PrivacyParams::with_svt_constant(1.0, 0.5, 0.0).is_err());
    }
}
