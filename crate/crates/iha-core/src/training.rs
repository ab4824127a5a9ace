//! Minibatch SGD with momentum and L2 regularization, plus trajectory
//! capture for the stationary-dynamics estimators.
//!
//! The update per step is
//! `g_t = mean batch gradient + alpha * w`, `h_t = mu h_{t-1} + g_t`,
//! `w_t = w_{t-1} - lambda h_t`. Training is a pure function of
//! `(spec, dataset, mask, cfg)`: repeated runs are bit-identical.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, MembershipMask};
use crate::model::{self, Architecture, ModelError, ModelSpec, ParameterVector, Record};
use crate::seeds::{derive, Stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("mask selects {members} records, batch size is {batch}")]
    InsufficientData { members: usize, batch: usize },
    #[error("training diverged at step {step} ({what})")]
    DivergedNumerically { step: usize, what: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How minibatch indices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Reshuffle the member list each epoch, take consecutive batches.
    Shuffle,
    /// Draw each batch i.i.d. with replacement. The stationary-noise theory
    /// assumes this mode.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            sampling: Sampling::Shuffle,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) {
        assert!(self.learning_rate > 0.0, "learning rate must be positive");
        assert!(
            (0.0..1.0).contains(&self.momentum),
            "momentum must be in [0, 1)"
        );
        assert!(self.weight_decay >= 0.0, "weight decay must be nonnegative");
        assert!(self.batch_size > 0, "batch size must be positive");
    }
}

/// Optimizer state: parameters, velocity, and the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub w: ParameterVector,
    pub h: Vec<f64>,
    pub step_count: usize,
}

impl SgdState {
    pub fn new(w: ParameterVector) -> Self {
        let h = vec![0.0; w.len()];
        Self {
            w,
            h,
            step_count: 0,
        }
    }
}

/// One SGD step. `total_grad` must already include the regularization term
/// and any minibatch noise.
pub fn sgd_step(
    mut state: SgdState,
    total_grad: &[f64],
    cfg: &SgdConfig,
) -> Result<SgdState, TrainError> {
    if total_grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::DivergedNumerically {
            step: state.step_count,
            what: "non-finite gradient".into(),
        });
    }
    let (lambda, mu) = (cfg.learning_rate, cfg.momentum);
    let w = state.w.values_mut();
    for i in 0..total_grad.len() {
        state.h[i] = mu * state.h[i] + total_grad[i];
        w[i] -= lambda * state.h[i];
    }
    state.step_count += 1;
    Ok(state)
}

/// Deterministic initial parameters: He-normal weights and zero biases for
/// the MLP, zeros for the linear model.
pub fn init_parameters(spec: &ModelSpec, seed: u64) -> ParameterVector {
    let mut w = ParameterVector::zeros(spec);
    if matches!(spec.architecture, Architecture::Linear) {
        return w;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::WeightInit, 0));
    let dims = spec.layer_dims();
    let values = w.values_mut();
    let mut off = 0;
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        for v in values[off..off + fan_out * fan_in].iter_mut() {
            *v = normal.sample(&mut rng);
        }
        off += fan_out * fan_in + fan_out; // biases stay zero
    }
    w
}

const DIVERGENCE_NORM: f64 = 1e8;

fn batch_total_grad(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
    batch: &[usize],
    alpha: f64,
) -> Result<Vec<f64>, TrainError> {
    let chosen: Vec<&Record> = batch.iter().map(|&i| records[i]).collect();
    let (_, mut g) = model::dataset_loss_grad(spec, w, &chosen)?;
    if alpha != 0.0 {
        for (gi, wi) in g.iter_mut().zip(w.values()) {
            *gi += alpha * wi;
        }
    }
    Ok(g)
}

fn guard_divergence(state: &SgdState) -> Result<(), TrainError> {
    let n = state.w.norm();
    if !n.is_finite() || n > DIVERGENCE_NORM {
        return Err(TrainError::DivergedNumerically {
            step: state.step_count,
            what: format!("|w| = {n}"),
        });
    }
    Ok(())
}

/// Train on the member records selected by `mask`. Runs
/// `epochs * floor(members / batch_size)` steps.
pub fn train(
    spec: &ModelSpec,
    dataset: &Dataset,
    mask: &MembershipMask,
    cfg: &SgdConfig,
) -> Result<ParameterVector, TrainError> {
    cfg.validate();
    let members = mask.member_indices();
    if members.len() < cfg.batch_size {
        return Err(TrainError::InsufficientData {
            members: members.len(),
            batch: cfg.batch_size,
        });
    }
    let records: Vec<&Record> = members.iter().map(|&i| dataset.record(i)).collect();
    let mut state = SgdState::new(init_parameters(spec, cfg.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::BatchShuffle, 0));
    let steps_per_epoch = records.len() / cfg.batch_size;
    let mut order: Vec<usize> = (0..records.len()).collect();

    for _epoch in 0..cfg.epochs {
        if cfg.sampling == Sampling::Shuffle {
            order.shuffle(&mut rng);
        }
        for b in 0..steps_per_epoch {
            let batch: Vec<usize> = match cfg.sampling {
                Sampling::Shuffle => order[b * cfg.batch_size..(b + 1) * cfg.batch_size].to_vec(),
                Sampling::Iid => (0..cfg.batch_size)
                    .map(|_| rng.gen_range(0..records.len()))
                    .collect(),
            };
            let g = batch_total_grad(spec, &state.w, &records, &batch, cfg.weight_decay)?;
            state = sgd_step(state, &g, cfg)?;
            guard_divergence(&state)?;
        }
    }
    Ok(state.w)
}

/// Run SGD over the whole dataset and snapshot `w` every `thin` steps after
/// `burn_in` steps, producing `samples` snapshots.
pub fn capture_trajectory(
    spec: &ModelSpec,
    dataset: &Dataset,
    cfg: &SgdConfig,
    burn_in: usize,
    samples: usize,
    thin: usize,
) -> Result<Vec<ParameterVector>, TrainError> {
    cfg.validate();
    assert!(thin > 0, "thin must be positive");
    if samples == 0 {
        return Ok(Vec::new());
    }
    let records: Vec<&Record> = dataset.records().iter().collect();
    if records.len() < cfg.batch_size {
        return Err(TrainError::InsufficientData {
            members: records.len(),
            batch: cfg.batch_size,
        });
    }
    let mut state = SgdState::new(init_parameters(spec, cfg.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::IidBatch, 0));
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut cursor = order.len(); // forces a shuffle on first use

    let total_steps = burn_in + samples * thin;
    let mut snapshots = Vec::with_capacity(samples);
    for step in 1..=total_steps {
        let batch: Vec<usize> = match cfg.sampling {
            Sampling::Iid => (0..cfg.batch_size)
                .map(|_| rng.gen_range(0..records.len()))
                .collect(),
            Sampling::Shuffle => {
                if cursor + cfg.batch_size > order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let b = order[cursor..cursor + cfg.batch_size].to_vec();
                cursor += cfg.batch_size;
                b
            }
        };
        let g = batch_total_grad(spec, &state.w, &records, &batch, cfg.weight_decay)?;
        state = sgd_step(state, &g, cfg)?;
        guard_divergence(&state)?;
        if step > burn_in && (step - burn_in).is_multiple_of(thin) {
            snapshots.push(state.w.clone());
        }
    }
    Ok(snapshots)
}
