//! JSON experiment configuration. Every section has defaults, unknown keys
//! are rejected, and [`ExperimentConfig::validate`] runs before any work.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedrobust_core::attacks::{AttackConfig, AttackFamily};
use fedrobust_core::federated::FederatedConfig;
use fedrobust_core::nn::{ModelVariant, SgdConfig};
use fedrobust_core::NoiseConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Mnist => "mnist",
            DataSource::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mnist" => Ok(DataSource::Mnist),
            "synthetic" => Ok(DataSource::Synthetic),
            other => Err(format!("unknown data source `{other}` (expected mnist or synthetic)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub separation: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { n: 12_500, num_features: 6, num_classes: 2, separation: 4.0, test_fraction: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub mnist_dir: PathBuf,
    /// Leading training samples kept; `null` keeps all.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Leading test samples attacked.
    pub attack_limit: Option<usize>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Mnist,
            mnist_dir: PathBuf::from("data/mnist"),
            train_limit: Some(10_000),
            test_limit: Some(2_000),
            attack_limit: Some(500),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 5, lr: 0.01, batch_size: 32 }
    }
}

impl TrainConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, batch_size: self.batch_size }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub datasets: Vec<DataSource>,
    pub attacks: Vec<AttackFamily>,
    /// Train DiPSeN with the federated scheme (the CNN baseline is always
    /// trained centrally).
    pub federated_dipsen: bool,
    pub timing_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            datasets: vec![DataSource::Mnist],
            attacks: vec![AttackFamily::Fgsm, AttackFamily::Bim, AttackFamily::Pgd],
            federated_dipsen: true,
            timing_steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
    /// Write wall-clock columns. Off makes every artifact byte-reproducible.
    pub timing: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { out_dir: PathBuf::from("out"), timing: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelVariant,
    /// Master seed for everything except federated training, which uses
    /// `fed.seed`. `--seed` sets both.
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub attack: AttackConfig,
    pub fed: FederatedConfig,
    pub pipeline: PipelineConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelVariant::Cnn,
            seed: 0,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            noise: NoiseConfig::default(),
            attack: AttackConfig::default(),
            fed: FederatedConfig::default(),
            pipeline: PipelineConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { key: key.into(), reason: reason.into() }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config { key, reason } => bad(&key, format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad("<config>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.attack.validate()?;
        self.fed.validate()?;
        self.train.sgd().validate()?;
        let d = &self.data;
        for (key, limit) in [("data.train_limit", d.train_limit), ("data.test_limit", d.test_limit), ("data.attack_limit", d.attack_limit)] {
            if limit == Some(0) {
                return Err(bad(key, "must be positive or null"));
            }
        }
        let s = &d.synthetic;
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(bad("data.synthetic.test_fraction", format!("must lie in (0, 1), got {}", s.test_fraction)));
        }
        if self.pipeline.datasets.is_empty() {
            return Err(bad("pipeline.datasets", "must name at least one dataset"));
        }
        if self.pipeline.attacks.is_empty() {
            return Err(bad("pipeline.attacks", "must name at least one attack"));
        }
        if self.pipeline.timing_steps < 10 {
            return Err(bad("pipeline.timing_steps", format!("need at least 10, got {}", self.pipeline.timing_steps)));
        }
        Ok(())
    }
}
