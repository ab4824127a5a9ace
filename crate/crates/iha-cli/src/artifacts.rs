//! Artifact layout, atomic writes, and the training manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use iha_core::data::MembershipMask;
use iha_core::game::{model_seeds, GameModel, MembershipGame};
use iha_core::model::{self, ModelSpec, ParameterVector, Record};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn params(&self, index: usize) -> PathBuf {
        self.root
            .join("models")
            .join(format!("model_{index:03}.params"))
    }

    pub fn mask(&self, index: usize) -> PathBuf {
        self.root
            .join("models")
            .join(format!("model_{index:03}.mask"))
    }

    pub fn eigen(&self, index: usize) -> PathBuf {
        self.root
            .join("hessian")
            .join(format!("model_{index:03}.eig"))
    }

    pub fn scores(&self, attack_id: &str, index: usize) -> PathBuf {
        self.root
            .join("scores")
            .join(format!("{attack_id}_m{index:03}.csv"))
    }

    pub fn score_sidecar(&self, attack_id: &str, index: usize) -> PathBuf {
        self.root
            .join("scores")
            .join(format!("{attack_id}_m{index:03}.json"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn metrics(&self) -> PathBuf {
        self.eval_dir().join("metrics.json")
    }

    pub fn roc(&self, attack_id: &str, index: usize) -> PathBuf {
        self.eval_dir()
            .join(format!("roc_{attack_id}_m{index:03}.csv"))
    }

    pub fn agreement(&self) -> PathBuf {
        self.eval_dir().join("agreement.csv")
    }
}

/// Write bytes to `path` through a unique temporary file plus atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().ok_or_else(|| {
        CliError::Config(format!("path {} has no parent directory", path.display()))
    })?;
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelManifest {
    pub index: usize,
    pub mask_seed: u64,
    pub sgd_seed: u64,
    pub members: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub spec_hash: String,
    pub config: ExperimentConfig,
    pub models: Vec<ModelManifest>,
}

pub fn model_manifest(
    spec: &ModelSpec,
    dataset: &iha_core::data::Dataset,
    mask: &MembershipMask,
    params: &ParameterVector,
    index: usize,
    game_seed: u64,
) -> Result<ModelManifest, CliError> {
    let (mask_seed, sgd_seed) = model_seeds(game_seed, index);
    let members: Vec<&Record> = mask
        .member_indices()
        .into_iter()
        .map(|i| dataset.record(i))
        .collect();
    let non_members: Vec<&Record> = mask
        .non_member_indices()
        .into_iter()
        .map(|i| dataset.record(i))
        .collect();
    Ok(ModelManifest {
        index,
        mask_seed,
        sgd_seed,
        members: members.len(),
        train_loss: model::dataset_loss(spec, params, &members)?,
        train_accuracy: model::accuracy(spec, params, &members)?,
        test_loss: model::dataset_loss(spec, params, &non_members)?,
        test_accuracy: model::accuracy(spec, params, &non_members)?,
    })
}

/// Load the trained game back from disk. Every missing file is reported with
/// its exact path.
pub fn load_game(config: &ExperimentConfig, layout: &Layout) -> Result<MembershipGame, CliError> {
    let dataset = config.load_dataset()?;
    let spec = config.model_spec(&dataset)?;
    let mut models = Vec::with_capacity(config.num_models);
    for index in 0..config.num_models {
        let params_path = layout.params(index);
        let mask_path = layout.mask(index);
        for p in [&params_path, &mask_path] {
            if !p.exists() {
                return Err(CliError::MissingArtifact { path: p.clone() });
            }
        }
        let params = ParameterVector::load(&spec, &params_path)?;
        let mask = MembershipMask::load(&mask_path)?;
        models.push(GameModel {
            index,
            mask,
            params,
        });
    }
    Ok(MembershipGame {
        dataset,
        spec,
        sgd: config.sgd.clone(),
        gamma: config.gamma,
        seed: config.game_seed,
        models,
    })
}
