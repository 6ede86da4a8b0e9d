use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::learners::{
    Algorithm, GbtModel, MlpModel, ModelParams, ModelTree, ModelTreeNode, Node, Predictor, RegressorModel,
    RegressorSpec,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        TargetScale { min: 0.0, max: 100.0 }
    }
}

/// Algorithm-specific payload of a [`ModelDocument`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentParams {
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
    pub model: serde_json::Value,
}

/// Portable, self-describing trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub algorithm: String,
    /// Set for transferable base models; their schema holds GENERIC
    /// features only.
    pub base_model: bool,
    pub feature_schema: FeatureSchema,
    pub target_scale: TargetScale,
    pub params: DocumentParams,
    pub provenance: String,
}

impl ModelDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn refuse_specific(schema: &FeatureSchema) -> Result<()> {
    let sf = schema.specific_names();
    if sf.is_empty() {
        Ok(())
    } else {
        Err(Error::IncompatibleTransfer(format!(
            "base model must not carry specific features: {}",
            sf.join(", ")
        )))
    }
}

pub fn export_model(model: &RegressorModel, as_base: bool, provenance: impl Into<String>) -> Result<ModelDocument> {
    if as_base {
        refuse_specific(&model.schema)?;
    }
    let payload = match &model.params {
        ModelParams::Gbt(m) => serde_json::to_value(m)?,
        ModelParams::Mlp(m) => serde_json::to_value(m)?,
        ModelParams::ModelTree(m) => serde_json::to_value(m)?,
    };
    Ok(ModelDocument {
        format_version: FORMAT_VERSION,
        algorithm: model.algorithm().tag().to_string(),
        base_model: as_base,
        feature_schema: model.schema.clone(),
        target_scale: TargetScale::default(),
        params: DocumentParams {
            hyperparameters: model.spec.hyperparameters().clone(),
            seed: model.spec.seed,
            model: payload,
        },
        provenance: provenance.into(),
    })
}

fn check_structure(params: &ModelParams, d: usize) -> Result<()> {
    let bad = |what: &str| Err(Error::Schema(format!("model document is inconsistent: {what}")));
    match params {
        ModelParams::Gbt(m) => {
            for t in &m.trees {
                for n in t.nodes() {
                    if let Node::Split { feature, .. } = n {
                        if *feature >= d {
                            return bad("tree split references a column outside the schema");
                        }
                    }
                }
            }
        }
        ModelParams::Mlp(m) => {
            if m.layer_sizes.first() != Some(&d) || m.norm_mean.len() != d || m.norm_std.len() != d {
                return bad("network input width differs from schema");
            }
            if m.layers.len() + 1 != m.layer_sizes.len() {
                return bad("layer count");
            }
            for (l, w) in m.layers.iter().zip(m.layer_sizes.windows(2)) {
                if l.inputs != w[0] || l.outputs != w[1] || l.weights.len() != w[0] * w[1] || l.biases.len() != w[1] {
                    return bad("layer shape");
                }
            }
        }
        ModelParams::ModelTree(m) => {
            for n in &m.nodes {
                if n.model().coefficients.len() != d {
                    return bad("linear model width differs from schema");
                }
                if let ModelTreeNode::Split { feature, .. } = n {
                    if *feature >= d {
                        return bad("split references a column outside the schema");
                    }
                }
            }
        }
    }
    Ok(())
}

/// Rebuilds the model from a document alone (no column mapping).
pub fn document_to_model(doc: &ModelDocument) -> Result<RegressorModel> {
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported model document version {}",
            doc.format_version
        )));
    }
    let algorithm: Algorithm = match doc.algorithm.as_str() {
        "GBT" => Algorithm::Gbt,
        "MLP" => Algorithm::Mlp,
        "MODEL_TREE" => Algorithm::ModelTree,
        other => return Err(Error::UnsupportedModel(format!("unknown algorithm tag `{other}`"))),
    };
    if doc.base_model {
        refuse_specific(&doc.feature_schema)?;
    }
    let spec = RegressorSpec::new(
        algorithm,
        doc.params.hyperparameters.iter().map(|(k, v)| (k.clone(), *v)),
        doc.params.seed,
    )?;
    let payload = doc.params.model.clone();
    let params = match algorithm {
        Algorithm::Gbt => ModelParams::Gbt(serde_json::from_value::<GbtModel>(payload)?),
        Algorithm::Mlp => ModelParams::Mlp(serde_json::from_value::<MlpModel>(payload)?),
        Algorithm::ModelTree => ModelParams::ModelTree(serde_json::from_value::<ModelTree>(payload)?),
    };
    check_structure(&params, doc.feature_schema.len())?;
    Ok(RegressorModel {
        spec,
        schema: doc.feature_schema.clone(),
        params,
        training_curve: Vec::new(),
    })
}

/// A transferred model bound to a local schema; columns are projected onto
/// the model's own schema on every prediction.
#[derive(Debug, Clone)]
pub struct ImportedModel {
    pub model: RegressorModel,
    pub local_schema: FeatureSchema,
    pub column_map: Vec<usize>,
    pub base_model: bool,
}

impl Predictor for ImportedModel {
    fn input_schema(&self) -> &FeatureSchema {
        &self.local_schema
    }

    fn model_schema(&self) -> &FeatureSchema {
        &self.model.schema
    }

    fn predict(&self, rows: &Dataset) -> Result<Vec<f64>> {
        self.local_schema.ensure_matches(rows.schema())?;
        let mut buf = vec![0.0; self.column_map.len()];
        Ok(rows
            .rows()
            .iter()
            .map(|r| {
                for (b, &j) in buf.iter_mut().zip(&self.column_map) {
                    *b = r.values[j];
                }
                self.model.predict_values(std::slice::from_ref(&buf))[0]
            })
            .collect())
    }
}

pub fn import_model(doc: &ModelDocument, local_schema: &FeatureSchema) -> Result<ImportedModel> {
    let model = document_to_model(doc)?;
    let mut column_map = Vec::with_capacity(model.schema.len());
    let mut missing = Vec::new();
    for e in model.schema.entries() {
        match local_schema.index_of(&e.name) {
            Some(j) if local_schema.entries()[j].kind == e.kind => column_map.push(j),
            Some(_) => missing.push(format!("{} (kind differs locally)", e.name)),
            None => missing.push(e.name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompatibleTransfer(format!(
            "features absent from the local schema: {}",
            missing.join(", ")
        )));
    }
    Ok(ImportedModel {
        base_model: doc.base_model,
        model,
        local_schema: local_schema.clone(),
        column_map,
    })
}
