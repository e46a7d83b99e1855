//! Run reports. Item and agent numbers are 1-based.

use dpfair::ConnectedAllocation;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    /// Per agent, the first and last item of its interval, or null.
    pub intervals: Vec<Option<[usize; 2]>>,
    /// Owner of each item.
    pub owners: Vec<usize>,
}

impl AllocationRecord {
    pub fn from_connected(a: &ConnectedAllocation) -> Self {
        Self {
            intervals: a.spans().iter().map(|s| s.map(|s| [s.start + 1, s.end])).collect(),
            owners: a.to_owners().owners().iter().map(|o| o + 1).collect(),
        }
    }

    pub fn to_connected(&self) -> dpfair::Result<ConnectedAllocation> {
        let m = self.owners.len();
        let spans = self
            .intervals
            .iter()
            .map(|iv| match *iv {
                Some([first, last]) if first >= 1 && first <= last => {
                    Ok(Some(dpfair::Span { start: first - 1, end: last }))
                }
                Some([first, last]) => Err(dpfair::Error::InvalidAllocation(format!("bad interval [{first}, {last}]"))),
                None => Ok(None),
            })
            .collect::<dpfair::Result<Vec<_>>>()?;
        let a = ConnectedAllocation::new(m, spans)?;
        if a.to_owners().owners().iter().map(|o| o + 1).ne(self.owners.iter().copied()) {
            return Err(dpfair::Error::InvalidAllocation("owners disagree with intervals".into()));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReportFile {
    pub command: String,
    pub seed: u64,
    pub parameters: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationRecord>,
    pub metadata: Value,
    pub timing: Timing,
    /// False when an audit or invariant check failed.
    pub passed: bool,
}

impl RunReportFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpfair::Span;

    #[test]
    fn allocation_record_round_trip() {
        let a = ConnectedAllocation::new(5, vec![Some(Span { start: 2, end: 5 }), None, Some(Span { start: 0, end: 2 })])
            .unwrap();
        let r = AllocationRecord::from_connected(&a);
        assert_eq!(r.intervals, vec![Some([3, 5]), None, Some([1, 2])]);
        assert_eq!(r.owners, vec![3, 3, 1, 1, 1]);
        assert_eq!(r.to_connected().unwrap(), a);
        let mut bad = r.clone();
        bad.owners[0] = 1;
        assert!(bad.to_connected().is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let report = RunReportFile {
            command: "allocate-ef".into(),
            seed: 3,
            parameters: serde_json::json!({"epsilon": 0.5}),
            allocation: None,
            metadata: serde_json::json!({"g": 28}),
            timing: Timing { elapsed_ms: 1.25 },
            passed: true,
        };
        let back: RunReportFile = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
