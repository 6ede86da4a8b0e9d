use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    Gbt,
    Mlp,
    ModelTree,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gbt, Algorithm::Mlp, Algorithm::ModelTree];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Gbt => "GBT",
            Algorithm::Mlp => "MLP",
            Algorithm::ModelTree => "MODEL_TREE",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gbt" | "xgboost" => Ok(Algorithm::Gbt),
            "mlp" | "nn" => Ok(Algorithm::Mlp),
            "model_tree" | "m5" | "m5p" => Ok(Algorithm::ModelTree),
            _ => Err(Error::UnsupportedModel(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// (name, default, min, max, integral)
type ParamDef = (&'static str, f64, f64, f64, bool);

const GBT_PARAMS: &[ParamDef] = &[
    ("eta", 0.004, 1e-9, 1.0, false),
    ("max_depth", 4.0, 1.0, 32.0, true),
    ("subsample", 0.5, 1e-9, 1.0, false),
    ("colsample_bytree", 1.0, 1e-9, 1.0, false),
    ("lambda", 1.0, 0.0, f64::MAX, false),
    ("min_child_weight", 1.0, 0.0, f64::MAX, false),
    ("n_rounds", 2000.0, 0.0, 1e6, true),
];

const MLP_PARAMS: &[ParamDef] = &[
    ("learning_rate", 0.001, 0.0, 1.0, false),
    ("dropout", 0.3, 0.0, 0.95, false),
    ("epochs", 500.0, 1.0, 1e6, true),
    ("batch_size", 32.0, 1.0, 1e7, true),
    ("hidden1", 32.0, 1.0, 4096.0, true),
    ("hidden2", 64.0, 1.0, 4096.0, true),
];

const MODEL_TREE_PARAMS: &[ParamDef] = &[
    ("min_leaf", 4.0, 1.0, 1e9, true),
    ("smoothing_k", 15.0, 0.0, f64::MAX, false),
    ("sd_fraction", 0.05, 0.0, 1.0, false),
    ("prune", 1.0, 0.0, 1.0, true),
    ("pruning_factor", 2.0, 0.0, f64::MAX, false),
];

fn param_defs(algorithm: Algorithm) -> &'static [ParamDef] {
    match algorithm {
        Algorithm::Gbt => GBT_PARAMS,
        Algorithm::Mlp => MLP_PARAMS,
        Algorithm::ModelTree => MODEL_TREE_PARAMS,
    }
}

/// Algorithm choice plus a fully resolved hyperparameter map.
///
/// Unspecified hyperparameters take the defaults of the reference setup
/// (GBT: eta 0.004, depth 4, subsample 0.5; MLP: 32/64 relu units, lr 0.001,
/// dropout 0.3; model tree: at least 4 rows per leaf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub algorithm: Algorithm,
    hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

impl RegressorSpec {
    pub fn new<I, K>(algorithm: Algorithm, overrides: I, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        let defs = param_defs(algorithm);
        let mut hyperparameters: BTreeMap<String, f64> =
            defs.iter().map(|(n, d, ..)| (n.to_string(), *d)).collect();
        for (name, value) in overrides {
            let name = name.into();
            let Some(&(_, _, lo, hi, integral)) = defs.iter().find(|d| d.0 == name) else {
                return Err(Error::Config(format!(
                    "unknown hyperparameter `{name}` for {algorithm}"
                )));
            };
            if !value.is_finite() || value < lo || value > hi || (integral && value.fract() != 0.0) {
                return Err(Error::Config(format!(
                    "hyperparameter `{name}` = {value} outside [{lo}, {hi}]{}",
                    if integral { " or not an integer" } else { "" }
                )));
            }
            hyperparameters.insert(name, value);
        }
        Ok(RegressorSpec {
            algorithm,
            hyperparameters,
            seed,
        })
    }

    pub fn with_defaults(algorithm: Algorithm, seed: u64) -> Self {
        Self::new(algorithm, std::iter::empty::<(String, f64)>(), seed).expect("defaults are in range")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        RegressorSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn hyperparameters(&self) -> &BTreeMap<String, f64> {
        &self.hyperparameters
    }

    pub fn get(&self, name: &str) -> f64 {
        self.hyperparameters[name]
    }

    pub(crate) fn get_usize(&self, name: &str) -> usize {
        self.get(name) as usize
    }
}
