//! Experiment files: TOML with `[dataset]`, `[model]`, `[train]` and
//! `[eval]` sections plus a top-level `output_dir`.
//!
//! ```toml
//! output_dir = "runs/toy"
//!
//! [dataset]
//! kind = "synthetic"
//! classes = 4
//!
//! [model]
//! code_length = 16
//!
//! [train]
//! lambda = 0.3
//! ```
//!
//! Unknown keys are rejected; omitted keys take their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar10, synthetic_splits, ImageShape, SplitSpec, Splits};
use crate::error::{Error, Result};
use crate::metrics::EvalSettings;
use crate::trainer::{ModelConfig, TrainConfig};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "DAGH_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub query_per_class: usize,
    pub gallery_per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            train_per_class: 50,
            query_per_class: 10,
            gallery_per_class: 50,
            height: 32,
            width: 32,
            channels: 3,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CifarConfig {
    /// Directory holding the six binary batch files.
    pub path: PathBuf,
    #[serde(default = "cifar_train")]
    pub train_per_class: usize,
    #[serde(default = "cifar_query")]
    pub query_per_class: usize,
    /// Omit to use every remaining image.
    #[serde(default)]
    pub gallery_per_class: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn cifar_train() -> usize {
    500
}

fn cifar_query() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Cifar10(CifarConfig),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic(SyntheticConfig::default())
    }
}

impl DatasetConfig {
    pub fn image_shape(&self) -> ImageShape {
        match self {
            DatasetConfig::Synthetic(s) => ImageShape::new(s.height, s.width, s.channels),
            DatasetConfig::Cifar10(_) => ImageShape::new(32, 32, 3),
        }
    }

    /// Generates or reads the three splits.
    pub fn load(&self) -> Result<Splits> {
        match self {
            DatasetConfig::Synthetic(s) => synthetic_splits(
                s.classes,
                [s.train_per_class, s.query_per_class, s.gallery_per_class],
                self.image_shape(),
                s.noise,
                s.seed,
            ),
            DatasetConfig::Cifar10(c) => load_cifar10(
                &c.path,
                &SplitSpec {
                    query_per_class: c.query_per_class,
                    train_per_class: c.train_per_class,
                    gallery_per_class: c.gallery_per_class,
                    seed: c.seed,
                },
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DatasetConfig::Synthetic(s) => {
                if s.classes < 2 {
                    return Err(Error::Config(format!("dataset.classes must be >= 2, got {}", s.classes)));
                }
                if s.train_per_class == 0 || s.query_per_class == 0 || s.gallery_per_class == 0 {
                    return Err(Error::Config("dataset split sizes must be positive".into()));
                }
                if !(s.noise.is_finite() && s.noise >= 0.0) {
                    return Err(Error::Config(format!("dataset.noise must be >= 0, got {}", s.noise)));
                }
            }
            DatasetConfig::Cifar10(c) => {
                if c.train_per_class == 0 || c.query_per_class == 0 {
                    return Err(Error::Config("dataset split sizes must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// `[model]`: code length plus network sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub code_length: usize,
    pub attention_channels: Vec<usize>,
    pub hash_channels: Vec<usize>,
    pub hidden: usize,
    pub kernel_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            code_length: 16,
            attention_channels: m.attention_channels,
            hash_channels: m.hash_channels,
            hidden: m.hidden,
            kernel_size: m.kernel_size,
        }
    }
}

impl ModelSection {
    pub fn networks(&self) -> ModelConfig {
        ModelConfig {
            attention_channels: self.attention_channels.clone(),
            hash_channels: self.hash_channels.clone(),
            hidden: self.hidden,
            kernel_size: self.kernel_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = Self {
            output_dir: default_output_dir(),
            dataset: DatasetConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
        };
        c.train.code_length = c.model.code_length;
        c
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.train.code_length = c.model.code_length;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) | Error::InvalidInput(m) => Error::Config(m),
            other => other,
        };
        self.dataset.validate()?;
        self.train.validate()?;
        self.model
            .networks()
            .validate(self.dataset.image_shape(), self.model.code_length)
            .map_err(cfg)?;
        if self.eval.cutoff == 0 {
            return Err(Error::Config("eval.cutoff must be at least 1".into()));
        }
        if self.eval.top_n.contains(&0) {
            return Err(Error::Config("eval.top_n values must be at least 1".into()));
        }
        Ok(())
    }

    /// `output_dir`, unless the environment override is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    /// Copy with one dotted key (`train.lambda`, `model.code_length`, ...)
    /// replaced by a TOML literal; bare words are taken as strings.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut table = toml::Table::try_from(self).expect("config converts to a TOML table");
        let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().filter(|(l, _)| !l.is_empty()).ok_or_else(|| Error::Config(format!("empty parameter name {key:?}")))?;
        let mut node = &mut table;
        for p in parents {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
        }
        node.insert(last.to_string(), parsed);
        Self::from_toml_str(&table.to_string()).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("override {key} = {value}: {m}")),
            other => other,
        })
    }
}
