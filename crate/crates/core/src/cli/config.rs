//! Experiment configuration: JSON in, defaults filled, validated, hashed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, LabeledDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::model::{Activation, LossKind, NetworkSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Network widths; input width and class count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub dropout_rates: Vec<f64>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_dims: vec![64, 32],
            embedding_dim: 8,
            dropout_rates: vec![0.2, 0.2],
            activation: Activation::Swish,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            embedding_dim: self.embedding_dim,
            num_classes,
            dropout_rates: self.dropout_rates.clone(),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
    /// Deltas are reported against the first arm.
    pub arms: Vec<LossKind>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seeds: vec![1, 2, 3, 4, 5],
            arms: vec![LossKind::Softmax, LossKind::SoftmaxDaal],
        }
    }
}

/// Everything one command needs. `seed` is the master seed: resolution
/// copies it into the synthetic generator and the trainer, and it also
/// drives the train/test split and k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub test_fraction: f64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub compare: CompareConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            data: DataSource::default(),
            test_fraction: 0.5,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            compare: CompareConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Applies the master seed and validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.set_seed(self.seed);
        self.validate()?;
        Ok(self)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        if let DataSource::Synthetic(spec) = &mut self.data {
            spec.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic(spec) => spec.validate()?,
            DataSource::Csv(path) => {
                if !path.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", path.display())));
                }
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        // Input width and class count are placeholders here; the data fixes them.
        self.network.spec(1, 2).validate()?;
        self.train.validate()?;
        if self.eval.restarts == 0 || self.eval.max_iter == 0 {
            return Err(Error::Config("eval restarts and max_iter must be >= 1".into()));
        }
        if self.eval.ks.contains(&0) {
            return Err(Error::Config("retrieval K must be >= 1".into()));
        }
        if self.compare.seeds.is_empty() || self.compare.arms.len() < 2 {
            return Err(Error::Config("compare needs at least one seed and two arms".into()));
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load_data(&self) -> Result<LabeledDataset> {
        match &self.data {
            DataSource::Synthetic(spec) => data::generate_multimodal(spec),
            DataSource::Csv(path) => data::load_features_csv(path, None),
        }
    }
}
