//! Differential privacy primitives driven by a [`RandomStream`]: Laplace
//! noise, the exponential mechanism and AboveThreshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One draw from Laplace(0, `scale`).
///
/// Inverse CDF on `p` uniform in (0, 1): `scale * ln(2p)` for `p < 1/2`,
/// otherwise `-scale * ln(2(1 - p))`.
pub fn sample_laplace(stream: &mut RandomStream, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("laplace scale must be positive, got {scale}")));
    }
    let p = stream.uniform_open();
    Ok(if p < 0.5 { scale * (2.0 * p).ln() } else { -scale * (2.0 * (1.0 - p)).ln() })
}

fn check_epsilon(epsilon: f64, allow_zero: bool) -> Result<()> {
    let ok = epsilon.is_finite() && (epsilon > 0.0 || (allow_zero && epsilon == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("invalid epsilon {epsilon}")))
    }
}

/// Selects index `h` with probability proportional to `exp(epsilon * scores[h] / 2)`.
///
/// Scores are shifted by their maximum before exponentiating and the
/// weights are accumulated with compensated summation, so strongly negative
/// scores lose mass gracefully instead of collapsing the distribution.
/// The caller is responsible for every score having sensitivity at most 1.
pub fn exponential_mechanism(stream: &mut RandomStream, scores: &[f64], epsilon: f64) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_epsilon(epsilon, true)?;
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|&s| (0.5 * epsilon * (s - top)).exp()).collect();
    let total = compensated_sum(&weights);
    let target = stream.uniform() * total;
    let mut acc = 0.0;
    let mut carry = 0.0;
    for (h, &w) in weights.iter().enumerate() {
        let y = w - carry;
        let t = acc + y;
        carry = (t - acc) - y;
        acc = t;
        if target < acc {
            return Ok(h);
        }
    }
    // rounding can leave `target` a hair above the final partial sum
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1))
}

fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvtOutcome {
    /// 0-based position of the first query judged above threshold.
    pub selected: Option<usize>,
    /// Number of queries evaluated.
    pub consumed: usize,
}

/// AboveThreshold over a lazily evaluated query sequence.
///
/// Draws a threshold perturbation `Lap(2/epsilon)` once, then for each query
/// in order a fresh `Lap(4/epsilon)`, and stops at the first query whose
/// noisy value reaches the noisy threshold. Queries after the selected one
/// are never evaluated.
pub fn above_threshold<I>(stream: &mut RandomStream, queries: I, tau: f64, epsilon: f64) -> Result<SvtOutcome>
where
    I: IntoIterator<Item = f64>,
{
    check_epsilon(epsilon, false)?;
    let rho = sample_laplace(stream, 2.0 / epsilon)?;
    let mut consumed = 0;
    for (h, value) in queries.into_iter().enumerate() {
        consumed += 1;
        let nu = sample_laplace(stream, 4.0 / epsilon)?;
        if value + nu >= tau + rho {
            return Ok(SvtOutcome { selected: Some(h), consumed });
        }
    }
    Ok(SvtOutcome { selected: None, consumed })
}
