use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a feature has a universal effect on perceived quality (generic)
/// or only holds in a local context such as content complexity (specific).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureKind {
    Generic,
    Specific,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: FeatureKind,
}

/// Ordered, uniquely named feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureEntry>", into = "Vec<FeatureEntry>")]
pub struct FeatureSchema {
    entries: Vec<FeatureEntry>,
}

impl FeatureSchema {
    pub fn new(entries: Vec<FeatureEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", e.name)));
            }
        }
        Ok(FeatureSchema { entries })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, FeatureKind)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, kind)| FeatureEntry {
                    name: name.to_string(),
                    kind,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn specific_names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.kind == FeatureKind::Specific)
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn is_generic_only(&self) -> bool {
        self.entries.iter().all(|e| e.kind == FeatureKind::Generic)
    }

    /// The GENERIC-only sub-schema, relative order preserved.
    pub fn generic(&self) -> FeatureSchema {
        FeatureSchema {
            entries: self
                .entries
                .iter()
                .filter(|e| e.kind == FeatureKind::Generic)
                .cloned()
                .collect(),
        }
    }

    /// Column indices into `self` for every feature of `target`, by name.
    /// Kinds must agree; any missing name is reported.
    pub fn column_map(&self, target: &FeatureSchema) -> Result<Vec<usize>> {
        let mut map = Vec::with_capacity(target.len());
        let mut missing = Vec::new();
        for e in &target.entries {
            match self.index_of(&e.name) {
                Some(i) if self.entries[i].kind == e.kind => map.push(i),
                Some(_) => missing.push(format!("{} (kind mismatch)", e.name)),
                None => missing.push(e.name.clone()),
            }
        }
        if missing.is_empty() {
            Ok(map)
        } else {
            Err(Error::Schema(format!(
                "features missing or mismatched: {}",
                missing.join(", ")
            )))
        }
    }

    /// Fails with the list of differing names unless `other` is identical.
    pub fn ensure_matches(&self, other: &FeatureSchema) -> Result<()> {
        if self == other {
            return Ok(());
        }
        let mut problems: Vec<String> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            match other.entries.get(i) {
                Some(o) if o == e => {}
                Some(o) => problems.push(format!("expected `{}` at column {i}, found `{}`", e.name, o.name)),
                None => problems.push(format!("missing `{}`", e.name)),
            }
        }
        for o in other.entries.iter().skip(self.len()) {
            problems.push(format!("unexpected `{}`", o.name));
        }
        Err(Error::Schema(format!(
            "feature schema mismatch: {}",
            problems.join("; ")
        )))
    }
}

impl TryFrom<Vec<FeatureEntry>> for FeatureSchema {
    type Error = Error;

    fn try_from(entries: Vec<FeatureEntry>) -> Result<Self> {
        FeatureSchema::new(entries)
    }
}

impl From<FeatureSchema> for Vec<FeatureEntry> {
    fn from(s: FeatureSchema) -> Self {
        s.entries
    }
}
