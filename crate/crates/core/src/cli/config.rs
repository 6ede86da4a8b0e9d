use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::R2Kind;
use crate::dataset::{Projection, DEFAULT_CONTENT_THRESHOLD};
use crate::error::{Error, Result};
use crate::learners::{Algorithm, RegressorSpec};
use crate::stacking::DEFAULT_GRID_STEP;

/// One experiment run, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Session CSV or feature table; relative paths resolve against the
    /// config file's directory.
    pub dataset: PathBuf,
    /// Mandatory; repetition `r` runs with seed `seed + r`.
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    /// Learner behind the with/without-content, split and cross tables.
    #[serde(default)]
    pub reference: LearnerConfig,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<PairConfig>,
    #[serde(default)]
    pub stacking: StackingConfig,
}

fn default_repetitions() -> usize {
    100
}

fn default_pairs() -> Vec<PairConfig> {
    vec![PairConfig::default()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Content,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Split that defines source (G0) and target (G1) for transfer.
    pub mode: SplitMode,
    pub ti_threshold: f64,
    pub si_threshold: f64,
    /// Size of G0 under the random split; defaults to the content split's G0
    /// size.
    pub g0_size: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitMode::Content,
            ti_threshold: DEFAULT_CONTENT_THRESHOLD,
            si_threshold: DEFAULT_CONTENT_THRESHOLD,
            g0_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub train_fraction: f64,
    pub r2: R2Kind,
    pub ks_alpha: f64,
    pub shap: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train_fraction: 0.7,
            r2: R2Kind::Pearson,
            ks_alpha: 0.01,
            shap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn default_algorithm() -> String {
    "gbt".into()
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            algorithm: default_algorithm(),
            params: BTreeMap::new(),
        }
    }
}

impl LearnerConfig {
    pub fn algorithm(&self) -> Result<Algorithm> {
        self.algorithm
            .parse()
            .map_err(|_| Error::Config(format!("unknown algorithm `{}`", self.algorithm)))
    }

    pub fn spec(&self, seed: u64) -> Result<RegressorSpec> {
        RegressorSpec::new(self.algorithm()?, self.params.iter().map(|(k, v)| (k.clone(), *v)), seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub base: LearnerConfig,
    pub local: LearnerConfig,
    #[serde(default = "generic_only")]
    pub base_features: Projection,
    #[serde(default = "all_features")]
    pub local_features: Projection,
}

fn generic_only() -> Projection {
    Projection::GenericOnly
}

fn all_features() -> Projection {
    Projection::All
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            base: LearnerConfig::default(),
            local: LearnerConfig::default(),
            base_features: Projection::GenericOnly,
            local_features: Projection::All,
        }
    }
}

impl PairConfig {
    pub fn label(&self) -> String {
        format!(
            "{}-{}",
            self.base.algorithm().map(|a| a.tag().to_ascii_lowercase()).unwrap_or_default(),
            self.local.algorithm().map(|a| a.tag().to_ascii_lowercase()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackingConfig {
    pub grid_step: f64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        StackingConfig {
            grid_step: DEFAULT_GRID_STEP,
        }
    }
}

/// Parses a `--set` value the way TOML would, falling back to a string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `dotted.path=value` to a TOML tree. Numeric segments index
/// arrays; missing table keys are created.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad override path `{path}`")));
    }
    let value = parse_override_value(raw.trim());
    let mut cur: &mut toml::Value = &mut *root_value(root);
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("`{seg}` in `{path}` must index an array")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}` descends into a scalar"))),
        };
    }
    Ok(())
}

// toml::Table is not a Value; wrap it temporarily so the walk is uniform.
fn root_value(root: &mut toml::Table) -> RootGuard<'_> {
    let table = std::mem::take(root);
    RootGuard {
        slot: root,
        value: toml::Value::Table(table),
    }
}

struct RootGuard<'a> {
    slot: &'a mut toml::Table,
    value: toml::Value,
}

impl std::ops::Deref for RootGuard<'_> {
    type Target = toml::Value;
    fn deref(&self) -> &toml::Value {
        &self.value
    }
}

impl std::ops::DerefMut for RootGuard<'_> {
    fn deref_mut(&mut self) -> &mut toml::Value {
        &mut self.value
    }
}

impl Drop for RootGuard<'_> {
    fn drop(&mut self) {
        if let toml::Value::Table(t) = std::mem::replace(&mut self.value, toml::Value::Boolean(false)) {
            *self.slot = t;
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Loads, applies overrides, resolves relative paths against the
    /// config's directory and validates.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = dir.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        if !cfg.dataset.is_file() {
            return Err(Error::Config(format!("dataset {} does not exist", cfg.dataset.display())));
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        let f = self.protocol.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("train_fraction {f} outside (0, 1)")));
        }
        if !(self.protocol.ks_alpha > 0.0 && self.protocol.ks_alpha < 1.0) {
            return Err(Error::Config("ks_alpha must lie in (0, 1)".into()));
        }
        let step = self.stacking.grid_step;
        if !(step > 0.0 && step <= 0.5) {
            return Err(Error::Config(format!("grid_step {step} outside (0, 0.5]")));
        }
        if self.pairs.is_empty() {
            return Err(Error::Config("at least one stacking pair is required".into()));
        }
        self.reference.spec(self.seed)?;
        for p in &self.pairs {
            p.base.spec(self.seed)?;
            p.local.spec(self.seed)?;
            if p.local_features == Projection::GenericOnly && p.base_features == Projection::All {
                return Err(Error::Config("a base model over all features cannot be stacked on a generic-only local model".into()));
            }
        }
        Ok(())
    }
}
