//! JSON instance files: `{"n", "m", "scale", "values", "kind"?, "tables"?}`.
//!
//! Values are integers read as `value / scale`. For `"kind": "general"`
//! every agent also carries a table of `2^m` bundle values indexed by
//! bitmask, where bit `j - 1` stands for item `j`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dpfair::{UtilityKind, UtilityProfile};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub scale: u64,
    pub values: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<UtilityKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Vec<Vec<u64>>>,
}

impl InstanceFile {
    pub fn from_profile(profile: &UtilityProfile) -> Self {
        let general = profile.kind() == UtilityKind::General;
        Self {
            n: profile.n(),
            m: profile.m(),
            scale: profile.scale(),
            values: profile.values().to_vec(),
            kind: general.then_some(UtilityKind::General),
            tables: profile.tables().map(<[_]>::to_vec),
        }
    }

    /// Validates the document field by field before building the profile.
    pub fn to_profile(&self) -> Result<UtilityProfile> {
        if self.scale == 0 {
            bail!("field `scale`: must be positive");
        }
        if self.values.len() != self.n {
            bail!("field `values`: {} rows for n = {}", self.values.len(), self.n);
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.m {
                bail!("field `values`: row {} has {} entries, expected m = {}", i + 1, row.len(), self.m);
            }
        }
        let kind = self.kind.unwrap_or(if self.tables.is_some() { UtilityKind::General } else { UtilityKind::Additive });
        let profile = match (kind, &self.tables) {
            (UtilityKind::Additive, None) => UtilityProfile::additive(self.scale, self.values.clone()),
            (UtilityKind::Additive, Some(_)) => bail!("field `tables`: not allowed for additive instances"),
            (UtilityKind::General, None) => bail!("field `tables`: required for general instances"),
            (UtilityKind::General, Some(tables)) => {
                if tables.len() != self.n {
                    bail!("field `tables`: {} tables for n = {}", tables.len(), self.n);
                }
                let profile = UtilityProfile::general(self.scale, self.m, tables.clone())
                    .context("field `tables`")?;
                if profile.values() != self.values.as_slice() {
                    bail!("field `values`: must equal the singleton entries of `tables`");
                }
                Ok(profile)
            }
        };
        profile.context("invalid instance")
    }

    pub fn read(path: &Path) -> Result<UtilityProfile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("instance {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<UtilityProfile> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.to_profile()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files serialize") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_additive_and_general() {
        let p = InstanceFile::parse(r#"{"n": 2, "m": 2, "scale": 2, "values": [[1, 0], [2, 2]]}"#).unwrap();
        assert_eq!(p.row(1), &[2, 2]);
        let g = InstanceFile::parse(
            r#"{"n": 1, "m": 2, "scale": 1, "kind": "general", "values": [[1, 2]], "tables": [[0, 1, 2, 5]]}"#,
        )
        .unwrap();
        assert_eq!(g.kind(), UtilityKind::General);
        assert_eq!(InstanceFile::from_profile(&g).tables, Some(vec![vec![0, 1, 2, 5]]));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let cases = [
            (r#"{"n": 2, "m": 2, "scale": 1, "values": [[1, 0]]}"#, "field `values`"),
            (r#"{"n": 1, "m": 2, "scale": 1, "values": [[1]]}"#, "row 1"),
            (r#"{"n": 1, "m": 1, "scale": 0, "values": [[1]]}"#, "field `scale`"),
            (r#"{"n": 1, "m": 1, "scale": 1, "values": [[1]], "kind": "general"}"#, "field `tables`"),
            (r#"{"n": 1, "m": 1, "scale": 1, "values": [[-1]]}"#, "line 1"),
            (r#"{"n": 1, "m": 1, "scale": 1, "vals": [[1]]}"#, "unknown field"),
        ];
        for (text, needle) in cases {
            let err = format!("{:#}", InstanceFile::parse(text).unwrap_err());
            assert!(err.contains(needle), "{err}");
        }
    }
}
