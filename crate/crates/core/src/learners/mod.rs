//! Three independently implemented regressors behind one fit/predict
//! contract.

mod gbt;
mod mlp;
mod model_tree;
mod spec;

use serde::{Deserialize, Serialize};

pub use gbt::{gbt_build_tree, DecisionTree, GbtModel, Node, TreeParams};
pub use mlp::{mlp_train_epoch, Batch, Dense, DropoutMasks, MlpModel, MlpOptimizer};
pub use model_tree::{
    count_leaves, decision_feature_indices, fit_linear, model_tree_fit_with, LinearModel, ModelTree, ModelTreeNode,
    ModelTreeParams,
};
pub use spec::{Algorithm, RegressorSpec};

use crate::dataset::{Dataset, FeatureSchema};
use crate::error::{Error, Result};

/// Anything that maps rows of a dataset to MOS predictions.
pub trait Predictor: Send + Sync {
    /// Schema the rows passed to [`Predictor::predict`] must carry.
    fn input_schema(&self) -> &FeatureSchema;

    /// Schema the underlying model was trained on.
    fn model_schema(&self) -> &FeatureSchema {
        self.input_schema()
    }

    fn predict(&self, rows: &Dataset) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "model", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelParams {
    Gbt(GbtModel),
    Mlp(MlpModel),
    ModelTree(ModelTree),
}

impl ModelParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ModelParams::Gbt(_) => Algorithm::Gbt,
            ModelParams::Mlp(_) => Algorithm::Mlp,
            ModelParams::ModelTree(_) => Algorithm::ModelTree,
        }
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            ModelParams::Gbt(m) => m.predict_row(x),
            ModelParams::Mlp(m) => m.predict_row(x),
            ModelParams::ModelTree(m) => m.predict_row(x),
        }
    }
}

/// A trained regressor with the schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub spec: RegressorSpec,
    pub schema: FeatureSchema,
    pub params: ModelParams,
    /// Per-round train RMSE (GBT) or per-epoch MSE (MLP); empty otherwise.
    pub training_curve: Vec<f64>,
}

impl RegressorModel {
    pub fn algorithm(&self) -> Algorithm {
        self.params.algorithm()
    }

    pub fn as_gbt(&self) -> Option<&GbtModel> {
        match &self.params {
            ModelParams::Gbt(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_model_tree(&self) -> Option<&ModelTree> {
        match &self.params {
            ModelParams::ModelTree(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_mlp(&self) -> Option<&MlpModel> {
        match &self.params {
            ModelParams::Mlp(m) => Some(m),
            _ => None,
        }
    }

    /// Predicts raw rows already ordered as `self.schema`.
    pub fn predict_values(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.params.predict_row(r)).collect()
    }
}

impl Predictor for RegressorModel {
    fn input_schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn predict(&self, rows: &Dataset) -> Result<Vec<f64>> {
        predict(self, rows)
    }
}

pub fn predict(model: &RegressorModel, rows: &Dataset) -> Result<Vec<f64>> {
    model.schema.ensure_matches(rows.schema())?;
    Ok(rows.rows().iter().map(|r| model.params.predict_row(&r.values)).collect())
}

pub fn fit(spec: &RegressorSpec, train: &Dataset) -> Result<RegressorModel> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let min_rows = match spec.algorithm {
        Algorithm::Gbt => 2,
        Algorithm::ModelTree => 1,
        Algorithm::Mlp => 1,
    };
    if train.len() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "{} needs at least {min_rows} training rows, got {}",
            spec.algorithm,
            train.len()
        )));
    }
    let x: Vec<Vec<f64>> = train.rows().iter().map(|r| r.values.clone()).collect();
    let y = train.labels();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite label".into()));
    }
    let (params, training_curve) = match spec.algorithm {
        Algorithm::Gbt => {
            let (m, h) = gbt::fit_gbt(spec, &x, &y);
            (ModelParams::Gbt(m), h)
        }
        Algorithm::Mlp => {
            let (m, h) = mlp::fit_mlp(spec, &x, &y)?;
            (ModelParams::Mlp(m), h)
        }
        Algorithm::ModelTree => {
            let p = ModelTreeParams::from_spec(spec);
            (ModelParams::ModelTree(model_tree_fit_with(&x, &y, &p)), Vec::new())
        }
    };
    Ok(RegressorModel {
        spec: spec.clone(),
        schema: train.schema().clone(),
        params,
        training_curve,
    })
}

/// Fits an M5-style model tree with default settings apart from `min_leaf`.
pub fn model_tree_fit(train: &Dataset, min_leaf: usize) -> Result<RegressorModel> {
    let spec = RegressorSpec::new(Algorithm::ModelTree, [("min_leaf", min_leaf as f64)], 0)?;
    fit(&spec, train)
}

/// Names of the features tested by the model tree's splits, schema order.
pub fn decision_features(model: &RegressorModel) -> Result<Vec<String>> {
    let tree = model
        .as_model_tree()
        .ok_or_else(|| Error::UnsupportedModel(format!("{} is not a model tree", model.algorithm())))?;
    Ok(decision_feature_indices(tree)
        .into_iter()
        .map(|j| model.schema.entries()[j].name.clone())
        .collect())
}
