//! Flat, versioned experiment configuration.
//!
//! A config file is TOML with top-level keys only:
//!
//! ```toml
//! version = 1
//! id = "gensim-tau20"
//! variant = "gensim"      # dotsim, cossim, gensim, indsim, K-inner, K-seq, mhaH, lstmL
//! n = 15
//! tau = 20
//! d = 16                  # embedding width for event data
//! learning_rate = 0.05
//! batch_size = 128
//! seeds = [0, 1, 2]
//! train = "data/train.bin"
//! test = "data/test.bin"
//! ```
//!
//! Missing keys take their defaults; unknown keys are errors. Overrides of
//! the form `key=value` are parsed as TOML values, falling back to a bare
//! string.
//!
//! ```
//! use tbsm::config::ExperimentConfig;
//!
//! let cfg = ExperimentConfig::from_toml_with("variant = \"8-inner\"", &["tau=10", "seeds=[4, 5]"]).unwrap();
//! assert_eq!((cfg.variant.as_str(), cfg.tau, cfg.seeds.clone()), ("8-inner", 10, vec![4, 5]));
//! assert!(ExperimentConfig::from_toml_with("", &["colour=1"]).is_err());
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Vocab;
use crate::embedding::DlrmDims;
use crate::error::{Error, Result};
use crate::model::{HeadConfig, ModelConfig};
use crate::train::{TrainConfig, DEFAULT_EPS, DEFAULT_LR};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Names the configuration in summaries.
    pub id: String,
    pub variant: String,
    pub n: usize,
    pub tau: usize,
    pub d: usize,
    pub learning_rate: f64,
    pub adagrad_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub log_points: usize,
    /// Fraction of the training file held out for validation curves.
    pub validation_fraction: f64,
    pub seeds: Vec<u64>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            id: "default".into(),
            variant: "gensim".into(),
            n: 15,
            tau: 20,
            d: 16,
            learning_rate: DEFAULT_LR,
            adagrad_eps: DEFAULT_EPS,
            batch_size: 128,
            epochs: 1,
            log_points: 10,
            validation_fraction: 0.05,
            seeds: (0..10).collect(),
            train: None,
            test: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` and applies `overrides` in order.
    pub fn from_toml_with(text: &str, overrides: &[impl AsRef<str>]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[impl AsRef<str>]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        self.head()?;
        self.train_config().validate()
    }

    pub fn head(&self) -> Result<HeadConfig> {
        HeadConfig::from_variant(&self.variant, self.tau)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            adagrad_eps: self.adagrad_eps,
            batch_size: self.batch_size,
            epochs: self.epochs,
            log_points: self.log_points,
        }
    }

    /// Model config; `vocab` adds the embedding layer for event data.
    pub fn model_config(&self, vocab: Option<Vocab>) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            n: self.n,
            tau: self.tau,
            head: self.head()?,
            embedding: vocab.map(|v| DlrmDims {
                d: self.d,
                n: self.n,
                users: v.users,
                items: v.items,
                categories: v.categories,
            }),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The full config with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| Error::Config(format!("`{key}` is not set")))?;
        if !p.exists() {
            return Err(Error::Config(format!(
                "`{key}` path {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }
}
