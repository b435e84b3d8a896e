//! Run configuration: a single JSON document naming the dataset files and
//! training settings. Command-line flags override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use zsl_core::data::{load_attributes, load_features, ClassCatalog, Role, SampleSet};
use zsl_core::error::{Error, Result};
use zsl_core::evaluate::GridSpec;
use zsl_core::train::TrainConfig;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub attributes: PathBuf,
    pub splits: PathBuf,
    pub train_features: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub val_seen_features: Option<PathBuf>,
    pub val_seen_labels: Option<PathBuf>,
    pub val_unseen_features: Option<PathBuf>,
    pub val_unseen_labels: Option<PathBuf>,
    pub test_seen_features: Option<PathBuf>,
    pub test_seen_labels: Option<PathBuf>,
    pub test_unseen_features: Option<PathBuf>,
    pub test_unseen_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Attribute embedding width of the attention head.
    pub embed_dim: usize,
    /// L2-normalize attribute rows after loading.
    pub normalize_attributes: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 16,
            normalize_attributes: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataPaths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fixed calibration constant for evaluation.
    pub gamma: Option<f64>,
    pub grid: GridSpec,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataPaths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            gamma: None,
            grid: GridSpec::default(),
            out: PathBuf::from("runs/out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Pull a required path out of the config with a field-level message.
fn required<'a>(field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    field
        .as_deref()
        .ok_or_else(|| Error::config(format!("config field data.{name} is required")))
}

pub fn load_catalog(cfg: &RunConfig) -> Result<ClassCatalog> {
    if cfg.data.attributes.as_os_str().is_empty() {
        return Err(Error::config("config field data.attributes is required"));
    }
    if cfg.data.splits.as_os_str().is_empty() {
        return Err(Error::config("config field data.splits is required"));
    }
    let mut catalog = load_attributes(&cfg.data.attributes, &cfg.data.splits)?;
    if cfg.model.normalize_attributes {
        catalog.normalize_attributes();
    }
    Ok(catalog)
}

pub fn load_shard(
    catalog: &ClassCatalog,
    features: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    feature_field: &str,
    label_field: &str,
    role: Role,
) -> Result<SampleSet> {
    let features = required(features, feature_field)?;
    let labels = required(labels, label_field)?;
    load_features(features, labels, catalog, role)
}
