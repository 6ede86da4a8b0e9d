use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};

/// Name of the label column in feature tables.
pub const LABEL_COLUMN: &str = "mos";

/// One labelled row aligned to a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: f64,
}

/// Column selection for [`Dataset::project`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    GenericOnly,
    All,
}

/// Immutable labelled feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<FeatureVector>,
    provenance: String,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<FeatureVector>, provenance: impl Into<String>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.values.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "row {} has {} values, schema has {}",
                    i + 1,
                    r.values.len(),
                    schema.len()
                )));
            }
            if !r.label.is_finite() || r.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    row: i + 1,
                    message: "non-finite value".into(),
                });
            }
        }
        Ok(Dataset {
            schema,
            rows,
            provenance: provenance.into(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.schema.index_of(name).map(|j| self.column(j))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: provenance.into(),
        }
    }

    /// Reorders/selects columns so the result conforms to `target`.
    pub fn select(&self, target: &FeatureSchema) -> Result<Dataset> {
        if &self.schema == target {
            return Ok(self.clone());
        }
        let map = self.schema.column_map(target)?;
        Ok(Dataset {
            schema: target.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureVector {
                    values: map.iter().map(|&j| r.values[j]).collect(),
                    label: r.label,
                })
                .collect(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn project(&self, keep: Projection) -> Dataset {
        match keep {
            Projection::All => self.clone(),
            Projection::GenericOnly => {
                let target = self.schema.generic();
                let mut out = self.select(&target).expect("generic sub-schema is always present");
                out.provenance = format!("{}|generic", self.provenance);
                out
            }
        }
    }

    /// Concatenates datasets sharing one schema.
    pub fn concat(parts: &[&Dataset], provenance: impl Into<String>) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut rows = Vec::new();
        for p in parts {
            first.schema.ensure_matches(&p.schema)?;
            rows.extend(p.rows.iter().cloned());
        }
        Ok(Dataset {
            schema: first.schema.clone(),
            rows,
            provenance: provenance.into(),
        })
    }
}

/// Free-function form of [`Dataset::project`].
pub fn project_features(data: &Dataset, keep: Projection) -> Dataset {
    data.project(keep)
}

/// Kind assigned to a feature-table column when reading it back.
pub fn default_kind(name: &str) -> FeatureKind {
    match name {
        super::features::TI | super::features::SI => FeatureKind::Specific,
        _ => FeatureKind::Generic,
    }
}

pub fn write_feature_table<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<&str> = data.schema.names().collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header)?;
    for r in &data.rows {
        let mut rec: Vec<String> = r.values.iter().map(f64::to_string).collect();
        rec.push(r.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<feature table>", e))?;
    Ok(())
}

/// Reads a feature table; the last column must be `mos`. Column kinds
/// follow [`default_kind`].
pub fn read_feature_table<R: Read>(reader: R, provenance: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.last() != Some(&LABEL_COLUMN) {
        return Err(Error::Schema(format!("last column must be `{LABEL_COLUMN}`")));
    }
    let feature_names = &names[..names.len() - 1];
    let schema = FeatureSchema::from_pairs(feature_names.iter().map(|n| (*n, default_kind(n))))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let mut values = Vec::with_capacity(feature_names.len());
        for (k, name) in names.iter().enumerate() {
            let raw = rec.get(k).unwrap_or("").trim();
            let v = raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            values.push(v);
        }
        let label = values.pop().unwrap();
        if !(0.0..=100.0).contains(&label) {
            return Err(Error::Validation {
                row,
                message: format!("mos {label} outside [0, 100]"),
            });
        }
        rows.push(FeatureVector { values, label });
    }
    Dataset::new(schema, rows, provenance)
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(file, path.display().to_string())
}
