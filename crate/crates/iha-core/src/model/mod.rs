//! Differentiable small models: a bias-free linear model and a ReLU MLP,
//! both with squared-error or softmax cross-entropy loss, exposing exact
//! per-record losses, gradients, Hessian-vector products, and dense Hessians.

mod eval;
mod scalar;

pub use eval::{
    accuracy, dataset_loss, dataset_loss_grad, exact_hessian, exact_hessian_with_budget, grad, hvp,
    loss, output, DEFAULT_HESSIAN_BUDGET_BYTES,
};
pub use scalar::{Dual, Scalar};

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} is not valid for this model")]
    InvalidLabel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dense Hessian needs {needed} bytes, budget is {budget}")]
    HessianTooLarge { needed: usize, budget: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("parameter file does not match spec: hash {found:#018x}, expected {expected:#018x}")]
    SpecHashMismatch { found: u64, expected: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    FormatError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `f(x) = W x` with `W` of shape `output_dim x input_dim`. No bias.
    Linear,
    /// Fully-connected ReLU net with the given hidden widths and a linear
    /// output layer. Every layer has a bias.
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `|f(x) - y|^2` (no 1/2 factor).
    SquaredError,
    /// `-ln softmax(f(x))[y]`.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub loss: LossKind,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelSpec {
    pub fn linear(loss: LossKind, input_dim: usize, output_dim: usize) -> Self {
        Self {
            architecture: Architecture::Linear,
            loss,
            input_dim,
            output_dim,
        }
    }

    pub fn mlp(hidden: Vec<usize>, loss: LossKind, input_dim: usize, output_dim: usize) -> Self {
        Self {
            architecture: Architecture::Mlp { hidden },
            loss,
            input_dim,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(ModelError::InvalidSpec(
                "dimensions must be positive".into(),
            ));
        }
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.contains(&0) {
                return Err(ModelError::InvalidSpec(
                    "layer widths must be positive".into(),
                ));
            }
        }
        if self.loss == LossKind::CrossEntropy && self.output_dim < 2 {
            return Err(ModelError::InvalidSpec(
                "cross-entropy needs output_dim >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Layer widths from input to output, e.g. `[784, 32, 10]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        match &self.architecture {
            Architecture::Linear => vec![self.input_dim, self.output_dim],
            Architecture::Mlp { hidden } => {
                let mut dims = Vec::with_capacity(hidden.len() + 2);
                dims.push(self.input_dim);
                dims.extend_from_slice(hidden);
                dims.push(self.output_dim);
                dims
            }
        }
    }

    pub fn has_bias(&self) -> bool {
        matches!(self.architecture, Architecture::Mlp { .. })
    }

    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        let bias = self.has_bias() as usize;
        dims.windows(2).map(|w| w[1] * w[0] + bias * w[1]).sum()
    }

    /// Stable 64-bit identifier of the spec, embedded in parameter files so
    /// weights cannot be loaded under the wrong architecture.
    pub fn spec_hash(&self) -> u64 {
        let mut canon = String::new();
        match &self.architecture {
            Architecture::Linear => canon.push_str("linear"),
            Architecture::Mlp { hidden } => {
                canon.push_str("mlp:");
                for (i, h) in hidden.iter().enumerate() {
                    if i > 0 {
                        canon.push(',');
                    }
                    canon.push_str(&h.to_string());
                }
            }
        }
        canon.push_str(match self.loss {
            LossKind::SquaredError => "|squared_error|",
            LossKind::CrossEntropy => "|cross_entropy|",
        });
        canon.push_str(&format!("in={}|out={}", self.input_dim, self.output_dim));
        let digest = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Ground-truth label of a record: a class index for classification or a
/// real regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class(usize),
    Target(f64),
}

/// One data point `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Record {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

const PARAM_MAGIC: &[u8; 7] = b"IHAPAR1";

/// Flat model parameters.
///
/// Layout: layers in forward order; within each layer the weight matrix in
/// row-major order (`W[i][j]` at offset `i * fan_in + j`), then the bias
/// vector when the architecture has one. The linear model is a single
/// bias-free `output_dim x input_dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self, ModelError> {
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Write as: magic `IHAPAR1`, spec hash u64 LE, length u64 LE, then the
    /// values as f64 LE.
    pub fn write_to(&self, spec: &ModelSpec, w: &mut impl Write) -> Result<(), ModelError> {
        w.write_all(PARAM_MAGIC)?;
        w.write_all(&spec.spec_hash().to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(spec: &ModelSpec, r: &mut impl Read) -> Result<Self, ModelError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(ModelError::FormatError(format!(
                "bad parameter magic {magic:?}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let found = u64::from_le_bytes(b8);
        let expected = spec.spec_hash();
        if found != expected {
            return Err(ModelError::SpecHashMismatch { found, expected });
        }
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        if len != spec.param_count() {
            return Err(ModelError::DimensionMismatch {
                expected: spec.param_count(),
                got: len,
            });
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        Ok(Self { values })
    }

    pub fn save(&self, spec: &ModelSpec, path: &Path) -> Result<(), ModelError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(spec, &mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(spec: &ModelSpec, path: &Path) -> Result<Self, ModelError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(spec, &mut f)
    }
}
