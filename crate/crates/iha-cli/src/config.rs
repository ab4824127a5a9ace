//! Experiment configuration: one versioned JSON file drives the whole
//! pipeline. Every output embeds the configuration hash so artifacts can be
//! traced back to the exact settings that produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use iha_core::attacks::{CgSettings, OutputMode, TermMask};
use iha_core::attacks::{LiraMode, LiraStatistic};
use iha_core::data::Dataset;
use iha_core::linalg::ConditioningPolicy;
use iha_core::model::{Architecture, LossKind, ModelSpec};
use iha_core::training::SgdConfig;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        seed: u64,
        n: usize,
        feature_dim: usize,
        num_classes: usize,
        class_separation: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Remap class labels to 0/1 regression targets (odd vs even) at load
    /// time.
    #[serde(default)]
    pub odd_even_targets: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub loss: LossKind,
}

/// Which inverse-Hessian route an attack uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Precomputed eigendecomposition (requires the `hessian` step).
    #[default]
    Exact,
    /// Matrix-free conjugate gradients.
    Cg,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_l0_fraction() -> f64 {
    1.0
}

fn default_refs_per_record() -> usize {
    32
}

fn default_max_candidates() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackConfig {
    Loss,
    Sif {
        #[serde(default)]
        mode: HessianMode,
        #[serde(default)]
        conditioning: Option<ConditioningPolicy>,
    },
    Iha {
        /// Distinguishes several variants in one run (term ablations,
        /// partial-knowledge sweeps). Defaults to `iha`.
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        mode: HessianMode,
        #[serde(default)]
        term_mask: Option<TermMask>,
        #[serde(default)]
        conditioning: Option<ConditioningPolicy>,
        #[serde(default = "default_l0_fraction")]
        l0_fraction: f64,
        #[serde(default)]
        l0_seed: u64,
        #[serde(default)]
        output_mode: Option<OutputMode>,
    },
    Lira {
        mode: LiraMode,
        #[serde(default)]
        statistic: Option<LiraStatistic>,
    },
    LAttack {
        #[serde(default = "default_refs_per_record")]
        refs_per_record: usize,
        #[serde(default = "default_max_candidates")]
        max_candidates: usize,
    },
    LiraL {
        #[serde(default = "default_refs_per_record")]
        refs_per_record: usize,
        #[serde(default = "default_max_candidates")]
        max_candidates: usize,
    },
}

impl AttackConfig {
    pub fn attack_id(&self) -> String {
        match self {
            Self::Loss => "loss".into(),
            Self::Sif { .. } => "sif".into(),
            Self::Iha { name, .. } => name.clone().unwrap_or_else(|| "iha".into()),
            Self::Lira {
                mode: LiraMode::Online,
                ..
            } => "lira".into(),
            Self::Lira {
                mode: LiraMode::Offline,
                ..
            } => "lira-offline".into(),
            Self::LAttack { .. } => "l-attack".into(),
            Self::LiraL { .. } => "lira-l".into(),
        }
    }

    pub fn needs_exact_hessian(&self) -> bool {
        matches!(
            self,
            Self::Sif {
                mode: HessianMode::Exact,
                ..
            } | Self::Iha {
                mode: HessianMode::Exact,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub sgd: SgdConfig,
    pub num_models: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub game_seed: u64,
    pub attacks: Vec<AttackConfig>,
    pub output_dir: PathBuf,
    /// Nominal FPR for agreement thresholds in `evaluate`.
    #[serde(default = "default_agreement_fpr")]
    pub agreement_fpr: f64,
}

fn default_agreement_fpr() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.num_models < 2 {
            return Err(CliError::Config("num_models must be at least 2".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CliError::Config("gamma must be in (0, 1)".into()));
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset.source {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "csv dataset {} does not exist",
                    path.display()
                )));
            }
        }
        if let DatasetSource::Idx { images, labels } = &self.dataset.source {
            for p in [images, labels] {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "idx file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Output directory, with the environment override applied.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os("IHA_OUTPUT_DIR") {
            Some(dir) => PathBuf::from(dir),
            None => self.output_dir.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let dataset = match &self.dataset.source {
            DatasetSource::Synthetic {
                seed,
                n,
                feature_dim,
                num_classes,
                class_separation,
            } => iha_core::data::synth_tabular(
                *seed,
                *n,
                *feature_dim,
                *num_classes,
                *class_separation,
            )?,
            DatasetSource::Csv { path, label_column } => {
                iha_core::data::load_csv_tabular(path, label_column)?
            }
            DatasetSource::Idx { images, labels } => iha_core::data::load_idx(images, labels)?,
        };
        Ok(if self.dataset.odd_even_targets {
            dataset.to_odd_even_targets()
        } else {
            dataset
        })
    }

    /// Model spec with the dimensions filled in from the dataset.
    pub fn model_spec(&self, dataset: &Dataset) -> Result<ModelSpec, CliError> {
        let output_dim = match (self.model.loss, self.dataset.odd_even_targets) {
            (LossKind::SquaredError, true) => 1,
            (LossKind::SquaredError, false) => 1,
            (LossKind::CrossEntropy, _) => dataset.num_classes,
        };
        let spec = ModelSpec {
            architecture: self.model.architecture.clone(),
            loss: self.model.loss,
            input_dim: dataset.feature_dim,
            output_dim,
        };
        spec.validate()
            .map_err(|e| CliError::Config(format!("model spec: {e}")))?;
        Ok(spec)
    }

    /// Assemble the per-attack scoring config for an `iha` entry.
    pub fn iha_config(
        &self,
        term_mask: Option<TermMask>,
        conditioning: Option<ConditioningPolicy>,
        l0_fraction: f64,
        l0_seed: u64,
        output_mode: Option<OutputMode>,
    ) -> iha_core::attacks::IhaConfig {
        iha_core::attacks::IhaConfig {
            lambda: self.sgd.learning_rate,
            mu: self.sgd.momentum,
            alpha: self.sgd.weight_decay,
            batch_size: self.sgd.batch_size,
            gamma: self.gamma,
            term_mask: term_mask.unwrap_or_default(),
            conditioning: conditioning.unwrap_or_default(),
            l0_fraction,
            l0_seed,
            output_mode: output_mode.unwrap_or(OutputMode::RawScore),
            cg: CgSettings::default(),
        }
    }

    /// Built-in config for the bundled synthetic end-to-end run.
    ///
    /// 32 models keep the per-record reference counts for the
    /// likelihood-ratio attack away from the degenerate <2 regime.
    pub fn bundled_synthetic(output_dir: PathBuf) -> Self {
        Self {
            version: CONFIG_VERSION,
            name: "synthetic-demo".into(),
            dataset: DatasetConfig {
                source: DatasetSource::Synthetic {
                    seed: 7,
                    n: 600,
                    feature_dim: 20,
                    num_classes: 4,
                    class_separation: 0.45,
                },
                odd_even_targets: false,
            },
            model: ModelConfig {
                architecture: Architecture::Mlp { hidden: vec![8] },
                loss: LossKind::CrossEntropy,
            },
            sgd: SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                weight_decay: 5e-4,
                batch_size: 32,
                epochs: 120,
                seed: 0,
                sampling: iha_core::training::Sampling::Shuffle,
            },
            num_models: 32,
            gamma: 0.5,
            game_seed: 314,
            attacks: vec![
                AttackConfig::Loss,
                AttackConfig::Sif {
                    mode: HessianMode::Exact,
                    conditioning: None,
                },
                AttackConfig::Iha {
                    name: None,
                    mode: HessianMode::Exact,
                    term_mask: None,
                    conditioning: None,
                    l0_fraction: 1.0,
                    l0_seed: 0,
                    output_mode: None,
                },
                AttackConfig::Lira {
                    mode: LiraMode::Online,
                    statistic: None,
                },
            ],
            output_dir,
            agreement_fpr: 0.05,
        }
    }
}
