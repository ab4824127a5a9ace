//! Stationary SGD dynamics around a local minimum.
//!
//! For SGD with learning rate `lambda`, momentum `mu`, weight decay `alpha`,
//! and batch size `S` near a minimum `w*` with Hessian `H` (of the
//! unregularized mean loss) and loss value `L* > 0`:
//!
//! - the leading minibatch noise covariance is
//!   `C = (2 L*/S) H - (alpha^2/S) w* w*'`;
//! - the stationary parameter fluctuation is
//!   `Sigma = lambda / (S (1 - mu)) (2 L* H - alpha^2 w* w*')
//!    (H + alpha I)^{-1} (2 I - lambda/(1 + mu) (H + alpha I))^{-1}`,
//!   valid while `2 - lambda (sigma_i + alpha) / (1 + mu) > 0` for every
//!   eigenvalue;
//! - the log-probability of observing parameters `w` (up to constants)
//!   combines a spectral term, the squared distance to `w*`, a curvature
//!   term through `H^{-3}`, and the loss ratio `L(w)/L*`.
//!
//! Each theoretical quantity has an empirical estimator next to it so the
//! pair can be validated against simulation on quadratic instances, where
//! the underlying assumptions hold exactly.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::exec;
use crate::linalg::{
    conditioned_inverse_apply, ConditioningPolicy, EigenDecomposition, LinalgError, SymMatrix,
};
use crate::model::{self, ModelError, ModelSpec, ParameterVector};
use crate::seeds::{derive, Stream};
use crate::training::SgdConfig;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("unstable regime: 2 - lambda (sigma_{index} + alpha)/(1 + mu) = {value} <= 0")]
    UnstableRegime { index: usize, value: f64 },
    #[error("loss at the minimum must be positive, got {0}")]
    NonPositiveLoss(f64),
    #[error("batch size {batch} exceeds dataset size {n}")]
    InvalidBatch { batch: usize, n: usize },
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("context dimensions disagree: w* has {w_star}, Hessian has {hessian}")]
    DimensionMismatch { w_star: usize, hessian: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything the stationary theory consumes: the minimum, its loss, the
/// Hessian spectrum, the SGD hyperparameters, and the training-set size.
#[derive(Debug, Clone)]
pub struct StationaryContext {
    pub w_star: Vec<f64>,
    pub l_star: f64,
    pub hessian: EigenDecomposition,
    pub cfg: SgdConfig,
    pub n: usize,
    /// Policy for every implicit Hessian inverse; modes dropped by a
    /// low-rank policy are also dropped from the spectral sum.
    pub conditioning: ConditioningPolicy,
}

impl StationaryContext {
    pub fn new(
        w_star: Vec<f64>,
        l_star: f64,
        hessian: EigenDecomposition,
        cfg: SgdConfig,
        n: usize,
        conditioning: ConditioningPolicy,
    ) -> Result<Self, DynamicsError> {
        if l_star <= 0.0 || !l_star.is_finite() {
            return Err(DynamicsError::NonPositiveLoss(l_star));
        }
        if w_star.len() != hessian.dim() {
            return Err(DynamicsError::DimensionMismatch {
                w_star: w_star.len(),
                hessian: hessian.dim(),
            });
        }
        Ok(Self {
            w_star,
            l_star,
            hessian,
            cfg,
            n,
            conditioning,
        })
    }

    fn dim(&self) -> usize {
        self.w_star.len()
    }

    /// `2 - lambda (sigma_i + alpha) / (1 + mu)` per mode, all positive in
    /// the stable regime.
    fn stability_factors(&self) -> Result<Vec<f64>, DynamicsError> {
        let lambda = self.cfg.learning_rate;
        let mu = self.cfg.momentum;
        let alpha = self.cfg.weight_decay;
        self.hessian
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(index, &s)| {
                let value = 2.0 - lambda * (s + alpha) / (1.0 + mu);
                if value <= 0.0 {
                    Err(DynamicsError::UnstableRegime { index, value })
                } else {
                    Ok(value)
                }
            })
            .collect()
    }
}

/// Leading-order minibatch noise covariance
/// `C = (2 L*/S) H - (alpha^2/S) w* w*'`.
pub fn noise_covariance_theory(ctx: &StationaryContext) -> SymMatrix {
    let d = ctx.dim();
    let h = ctx.hessian.reconstruct();
    let s = ctx.cfg.batch_size as f64;
    let c1 = 2.0 * ctx.l_star / s;
    let c2 = ctx.cfg.weight_decay * ctx.cfg.weight_decay / s;
    SymMatrix::from_fn(d, |i, j| {
        c1 * h.get(i, j) - c2 * ctx.w_star[i] * ctx.w_star[j]
    })
}

/// Sample covariance of the minibatch noise
/// `eta = (1/S) sum_{i in B} grad l(w, z_i) - grad L(w)` over `trials`
/// independent batches drawn with replacement. `S == n` means a full batch,
/// for which the noise is identically zero.
pub fn noise_covariance_empirical(
    spec: &ModelSpec,
    dataset: &Dataset,
    w: &ParameterVector,
    batch_size: usize,
    trials: usize,
    seed: u64,
) -> Result<SymMatrix, DynamicsError> {
    let n = dataset.len();
    if batch_size > n {
        return Err(DynamicsError::InvalidBatch {
            batch: batch_size,
            n,
        });
    }
    if trials < 2 {
        return Err(DynamicsError::InsufficientSamples(trials));
    }
    let refs: Vec<&model::Record> = dataset.records().iter().collect();
    let (_, full_grad) = model::dataset_loss_grad(spec, w, &refs)?;
    let d = w.len();

    let per_record: Vec<Vec<f64>> = exec::try_map_indexed(n, |i| {
        model::grad(spec, w, refs[i]).map_err(DynamicsError::Model)
    })?;

    let etas: Vec<Vec<f64>> = exec::map_indexed(trials, |t| {
        let mut eta = vec![0.0; d];
        if batch_size == n {
            return eta;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::NoiseTrial, t as u64));
        for _ in 0..batch_size {
            let idx = rng.gen_range(0..n);
            for (e, g) in eta.iter_mut().zip(&per_record[idx]) {
                *e += g;
            }
        }
        for (e, f) in eta.iter_mut().zip(&full_grad) {
            *e = *e / batch_size as f64 - f;
        }
        eta
    });

    Ok(sample_covariance(&etas, d))
}

fn sample_covariance(rows: &[Vec<f64>], d: usize) -> SymMatrix {
    let t = rows.len();
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);

    let mut cov = vec![0.0; d * d];
    for row in rows {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (t - 1) as f64;
    SymMatrix::from_fn(d, |i, j| cov[i * d + j] / denom)
}

/// Stationary parameter fluctuation from the explicit leading-order formula.
/// All Hessian inverses go through `ctx.conditioning`; the result is
/// symmetrized.
pub fn fluctuation_theory(ctx: &StationaryContext) -> Result<SymMatrix, DynamicsError> {
    let stab = ctx.stability_factors()?;
    let d = ctx.dim();
    let lambda = ctx.cfg.learning_rate;
    let mu = ctx.cfg.momentum;
    let alpha = ctx.cfg.weight_decay;
    let s = ctx.cfg.batch_size as f64;

    // B = 2 L* H - alpha^2 w* w*'
    let h = ctx.hessian.reconstruct();
    let b = DMatrix::from_fn(d, d, |i, j| {
        2.0 * ctx.l_star * h.get(i, j) - alpha * alpha * ctx.w_star[i] * ctx.w_star[j]
    });

    // (H + alpha I)^{-1} (2I - lambda/(1+mu)(H + alpha I))^{-1} shares the
    // eigenbasis of H, so both factors collapse to per-mode scalars.
    let shifted_inverse: Vec<f64> = match ctx.conditioning {
        ConditioningPolicy::Damped { epsilon } => ctx
            .hessian
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(index, &sig)| {
                let den = sig + alpha + epsilon;
                if den <= 0.0 {
                    Err(DynamicsError::UnstableRegime { index, value: den })
                } else {
                    Ok(1.0 / den)
                }
            })
            .collect::<Result<_, _>>()?,
        ConditioningPolicy::LowRank { epsilon } => ctx
            .hessian
            .eigenvalues()
            .iter()
            .map(|&sig| {
                if sig > epsilon {
                    1.0 / (sig + alpha)
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let factors: Vec<f64> = shifted_inverse
        .iter()
        .zip(&stab)
        .map(|(inv, st)| inv / st)
        .collect();

    let mut g = DMatrix::zeros(d, d);
    for (k, &f) in factors.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let u = ctx.hessian.eigenvector(k);
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] += f * u[i] * u[j];
            }
        }
    }

    let sigma = b * g * (lambda / (s * (1.0 - mu)));
    let raw: Vec<f64> = (0..d * d).map(|k| sigma[(k / d, k % d)]).collect();
    Ok(SymMatrix::from_average(d, &raw))
}

/// Unbiased sample covariance of a parameter trajectory.
pub fn fluctuation_empirical(trajectory: &[ParameterVector]) -> Result<SymMatrix, DynamicsError> {
    if trajectory.len() < 2 {
        return Err(DynamicsError::InsufficientSamples(trajectory.len()));
    }
    let d = trajectory[0].len();
    let rows: Vec<Vec<f64>> = trajectory.iter().map(|w| w.values().to_vec()).collect();
    Ok(sample_covariance(&rows, d))
}

/// Log-probability (up to constants) of observing parameters `w` at
/// stationarity, evaluated under the quadratic model of the loss around
/// `w*`: `L(w) = L* + (w - w*)' H (w - w*) / 2` and
/// `grad L(w) = H (w - w*)`.
///
/// With a low-rank policy the spectral sum (and its `ln L*` share) runs over
/// the retained modes only; a damped policy replaces `1/sigma_i` by
/// `1/(sigma_i + eps)`, which reduces to the plain formula at `eps = 0`.
pub fn log_posterior(w: &ParameterVector, ctx: &StationaryContext) -> Result<f64, DynamicsError> {
    if w.len() != ctx.dim() {
        return Err(DynamicsError::DimensionMismatch {
            w_star: ctx.dim(),
            hessian: w.len(),
        });
    }
    let stab = ctx.stability_factors()?;
    let lambda = ctx.cfg.learning_rate;
    let mu = ctx.cfg.momentum;
    let alpha = ctx.cfg.weight_decay;
    let s = ctx.cfg.batch_size as f64;

    // spectral term over retained modes
    let mut spectral = 0.0;
    let mut retained = 0usize;
    for (k, (&sig, &st)) in ctx.hessian.eigenvalues().iter().zip(&stab).enumerate() {
        let denom = match ctx.conditioning {
            ConditioningPolicy::Damped { epsilon } => {
                let den = sig + epsilon;
                if den <= 0.0 {
                    return Err(DynamicsError::Linalg(LinalgError::IllConditioned {
                        sigma: den,
                    }));
                }
                den
            }
            ConditioningPolicy::LowRank { epsilon } => {
                if sig <= epsilon {
                    continue;
                }
                sig
            }
        };
        let arg = st * (sig + alpha) / denom;
        if arg <= 0.0 {
            return Err(DynamicsError::UnstableRegime {
                index: k,
                value: arg,
            });
        }
        spectral += arg.ln();
        retained += 1;
    }

    let delta: Vec<f64> = w
        .values()
        .iter()
        .zip(&ctx.w_star)
        .map(|(a, b)| a - b)
        .collect();
    let dist2: f64 = delta.iter().map(|x| x * x).sum();

    // quadratic model of the loss and its gradient
    let coeffs = ctx.hessian.project(&delta)?;
    let quad_form: f64 = coeffs
        .iter()
        .zip(ctx.hessian.eigenvalues())
        .map(|(c, sig)| sig * c * c)
        .sum();
    let loss_w = ctx.l_star + 0.5 * quad_form;

    let k1 = 1.0 - lambda * alpha / (1.0 + mu);
    let k2 = 2.0 - lambda * alpha / (1.0 + mu);

    let mut lp = -(retained as f64) / 2.0 * ctx.l_star.ln();
    lp += spectral;
    lp -= s * (1.0 - mu) / (2.0 * lambda) * k1 * dist2 / ctx.l_star;

    if alpha != 0.0 {
        let grad_l: Vec<f64> = {
            let scaled: Vec<f64> = coeffs
                .iter()
                .zip(ctx.hessian.eigenvalues())
                .map(|(c, sig)| sig * c)
                .collect();
            ctx.hessian.combine(&scaled)
        };
        let u1 = conditioned_inverse_apply(&ctx.hessian, ctx.conditioning, &grad_l)?;
        let u2 = conditioned_inverse_apply(&ctx.hessian, ctx.conditioning, &u1)?;
        let u3 = conditioned_inverse_apply(&ctx.hessian, ctx.conditioning, &u2)?;
        let h3_form: f64 = grad_l.iter().zip(&u3).map(|(a, b)| a * b).sum();
        lp -= s * (1.0 - mu) * alpha / (4.0 * lambda) * k2 * h3_form / ctx.l_star;
    }

    lp += s * (1.0 - mu) / (2.0 * (1.0 + mu)) * loss_w / ctx.l_star;
    Ok(lp)
}
