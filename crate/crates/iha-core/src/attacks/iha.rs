//! The inverse-Hessian membership score.
//!
//! With `a = H^{-1} grad l(w, z)`, `b = H^{-1} grad L0(w)`,
//! `c = H^{-1} a`, `k1 = 1 - lambda alpha / (1 + mu)`, and
//! `k2 = 2 - lambda alpha / (1 + mu)`:
//!
//! - `I1 = k1 / n * |a|^2`
//! - `I2 = 2 k1 * b'a`
//! - `I3 = alpha k2 / (2n) * a'c`
//! - `I4 = alpha k2 * b'c`
//!
//! and the raw score is `l(w, z) / (1 + mu) - (I1 + I2 + I3 + I4) / lambda`,
//! with the term mask selecting which pieces participate. `grad L0` is the
//! mean gradient over the training members excluding the candidate itself;
//! the precomputed training gradient makes that a rank-one update.

use serde::{Deserialize, Serialize};

use super::context::{CgSettings, TargetContext};
use super::AttackError;
use crate::linalg::ConditioningPolicy;
use crate::model::{self, Record};
use crate::seeds::{derive, mix64, Stream};
use crate::training::SgdConfig;

/// Which ingredients of the score participate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMask {
    pub loss: bool,
    pub i1: bool,
    pub i2: bool,
    pub i3: bool,
    pub i4: bool,
}

impl TermMask {
    pub const FULL: Self = Self {
        loss: true,
        i1: true,
        i2: true,
        i3: true,
        i4: true,
    };

    pub fn influence_only() -> Self {
        Self {
            loss: false,
            i1: true,
            i2: true,
            i3: true,
            i4: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.loss || self.i1 || self.i2 || self.i3 || self.i4)
    }
}

impl Default for TermMask {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// The raw score; monotone in the membership posterior.
    RawScore,
    /// `sigmoid(S (1 - mu) / (2 n L*) * raw + ln(gamma / (1 - gamma)))`.
    SigmoidProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhaConfig {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    /// Batch size of the target's training run; only the sigmoid output mode
    /// consumes it.
    pub batch_size: usize,
    /// Membership prior. 0.5 makes the prior term vanish.
    pub gamma: f64,
    pub term_mask: TermMask,
    pub conditioning: ConditioningPolicy,
    /// Fraction of the other members used to form `grad L0`; 1.0 is the
    /// exact precomputed path.
    pub l0_fraction: f64,
    /// Base seed for per-record subset draws when `l0_fraction < 1`.
    pub l0_seed: u64,
    pub output_mode: OutputMode,
    pub cg: CgSettings,
}

impl IhaConfig {
    /// Adopt the target's training hyperparameters.
    pub fn from_sgd(cfg: &SgdConfig) -> Self {
        Self {
            lambda: cfg.learning_rate,
            mu: cfg.momentum,
            alpha: cfg.weight_decay,
            batch_size: cfg.batch_size,
            gamma: 0.5,
            term_mask: TermMask::FULL,
            conditioning: ConditioningPolicy::default(),
            l0_fraction: 1.0,
            l0_seed: 0,
            output_mode: OutputMode::RawScore,
            cg: CgSettings::default(),
        }
    }

    fn validate(&self) -> Result<(), AttackError> {
        if self.term_mask.is_empty() {
            return Err(AttackError::EmptyTermMask);
        }
        assert!(self.lambda > 0.0, "lambda must be positive");
        assert!((0.0..1.0).contains(&self.mu), "mu must be in [0, 1)");
        assert!(
            self.l0_fraction > 0.0 && self.l0_fraction <= 1.0,
            "l0_fraction must be in (0, 1]"
        );
        assert!(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma must be in (0, 1)"
        );
        Ok(())
    }
}

/// The four influence terms plus the candidate's loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhaTerms {
    pub loss_value: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

/// Whether the candidate sits in the target's training set, with its dataset
/// index (the index seeds per-record subset draws and identifies the member
/// to exclude).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Member { index: usize },
    NonMember { index: usize },
}

impl TargetKind {
    fn index(&self) -> usize {
        match self {
            Self::Member { index } | Self::NonMember { index } => *index,
        }
    }

    fn is_member(&self) -> bool {
        matches!(self, Self::Member { .. })
    }
}

/// Amortized scorer: the inverse-Hessian image of the training gradient is
/// computed once and reused for every candidate.
pub struct IhaScorer<'a> {
    ctx: &'a TargetContext,
    cfg: IhaConfig,
    /// `H^{-1} grad_train`, precomputed for the exact-knowledge path.
    ihvp_grad_train: Vec<f64>,
}

impl<'a> IhaScorer<'a> {
    pub fn new(ctx: &'a TargetContext, cfg: IhaConfig) -> Result<Self, AttackError> {
        cfg.validate()?;
        let ihvp_grad_train =
            ctx.hessian
                .apply_inverse(cfg.conditioning, &ctx.grad_train, &cfg.cg)?;
        Ok(Self {
            ctx,
            cfg,
            ihvp_grad_train,
        })
    }

    pub fn config(&self) -> &IhaConfig {
        &self.cfg
    }

    /// The four terms for one candidate.
    pub fn terms(&self, z: &Record, kind: TargetKind) -> Result<IhaTerms, AttackError> {
        let ctx = self.ctx;
        let cfg = &self.cfg;
        let n = ctx.member_count as f64;
        let loss_value = model::loss(&ctx.spec, &ctx.w, z)?;
        let g = model::grad(&ctx.spec, &ctx.w, z)?;
        let a = ctx.hessian.apply_inverse(cfg.conditioning, &g, &cfg.cg)?;

        // b = H^{-1} grad L0; the exact path peels the candidate off the
        // precomputed image by linearity
        let b: Vec<f64> = if cfg.l0_fraction >= 1.0 {
            if kind.is_member() {
                self.ihvp_grad_train
                    .iter()
                    .zip(&a)
                    .map(|(t, ai)| t - ai / n)
                    .collect()
            } else {
                self.ihvp_grad_train.clone()
            }
        } else {
            let l0 = self.subsampled_l0_gradient(kind)?;
            ctx.hessian.apply_inverse(cfg.conditioning, &l0, &cfg.cg)?
        };

        let k1 = 1.0 - cfg.lambda * cfg.alpha / (1.0 + cfg.mu);
        let k2 = 2.0 - cfg.lambda * cfg.alpha / (1.0 + cfg.mu);
        let a_sq: f64 = a.iter().map(|x| x * x).sum();
        let ba: f64 = b.iter().zip(&a).map(|(x, y)| x * y).sum();

        let i1 = k1 / n * a_sq;
        let i2 = 2.0 * k1 * ba;
        let (i3, i4) = if cfg.alpha == 0.0 {
            (0.0, 0.0)
        } else {
            let c = ctx.hessian.apply_inverse(cfg.conditioning, &a, &cfg.cg)?;
            let ac: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
            let bc: f64 = b.iter().zip(&c).map(|(x, y)| x * y).sum();
            (cfg.alpha / (2.0 * n) * k2 * ac, cfg.alpha * k2 * bc)
        };

        Ok(IhaTerms {
            loss_value,
            i1,
            i2,
            i3,
            i4,
        })
    }

    /// `grad L0` from a seeded subset of the other members, scaled so that a
    /// full subset reproduces the exact value.
    fn subsampled_l0_gradient(&self, kind: TargetKind) -> Result<Vec<f64>, AttackError> {
        let ctx = self.ctx;
        let n = ctx.member_count as f64;
        let pool: Vec<usize> = match kind {
            TargetKind::Member { index } => {
                // exclude the candidate itself from the pool
                let excluded = ctx
                    .member_indices
                    .iter()
                    .position(|&i| i == index)
                    .ok_or_else(|| {
                        AttackError::MissingContext(format!(
                            "record {index} is not in the member set"
                        ))
                    })?;
                (0..ctx.members.len()).filter(|&i| i != excluded).collect()
            }
            TargetKind::NonMember { .. } => (0..ctx.members.len()).collect(),
        };
        let m = pool.len();
        if m == 0 {
            return Ok(vec![0.0; ctx.w.len()]);
        }
        let k = ((self.cfg.l0_fraction * m as f64).round() as usize).clamp(1, m);

        // Fisher-Yates prefix with a counter-based stream per record
        let seed = derive(self.cfg.l0_seed, Stream::PartialL0, kind.index() as u64);
        let mut order = pool;
        for i in 0..k {
            let j = i + (mix64(seed.wrapping_add(i as u64)) as usize) % (m - i);
            order.swap(i, j);
        }

        let mut sum = vec![0.0; ctx.w.len()];
        for &member_pos in &order[..k] {
            let g = model::grad(&ctx.spec, &ctx.w, &ctx.members[member_pos])?;
            for (s, gi) in sum.iter_mut().zip(&g) {
                *s += gi;
            }
        }
        // grad L0 = (m / n) * mean over the pool, estimated from k draws
        let scale = m as f64 / (n * k as f64);
        sum.iter_mut().for_each(|x| *x *= scale);
        Ok(sum)
    }

    /// Full score for one candidate.
    pub fn score(&self, z: &Record, kind: TargetKind) -> Result<f64, AttackError> {
        let terms = self.terms(z, kind)?;
        iha_score(&terms, self.ctx, &self.cfg)
    }
}

/// One-shot terms computation. Audits scoring many candidates should build
/// an [`IhaScorer`] instead so the training-gradient inverse is shared.
pub fn iha_terms(
    ctx: &TargetContext,
    z: &Record,
    kind: TargetKind,
    cfg: &IhaConfig,
) -> Result<IhaTerms, AttackError> {
    IhaScorer::new(ctx, cfg.clone())?.terms(z, kind)
}

/// Combine the terms into the membership score under the config's term mask
/// and output mode.
pub fn iha_score(
    terms: &IhaTerms,
    ctx: &TargetContext,
    cfg: &IhaConfig,
) -> Result<f64, AttackError> {
    cfg.validate()?;
    let mut influence = 0.0;
    if cfg.term_mask.i1 {
        influence += terms.i1;
    }
    if cfg.term_mask.i2 {
        influence += terms.i2;
    }
    if cfg.term_mask.i3 {
        influence += terms.i3;
    }
    if cfg.term_mask.i4 {
        influence += terms.i4;
    }
    let mut raw = -influence / cfg.lambda;
    if cfg.term_mask.loss {
        raw += terms.loss_value / (1.0 + cfg.mu);
    }
    match cfg.output_mode {
        OutputMode::RawScore => Ok(raw),
        OutputMode::SigmoidProbability => {
            let l_star = ctx.train_loss.ok_or_else(|| {
                AttackError::MissingContext("sigmoid output needs a training-loss estimate".into())
            })?;
            if l_star <= 0.0 {
                return Err(AttackError::MissingContext(format!(
                    "training loss {l_star} cannot calibrate the sigmoid"
                )));
            }
            let scale =
                cfg.batch_size as f64 * (1.0 - cfg.mu) / (2.0 * ctx.member_count as f64 * l_star);
            let prior = (cfg.gamma / (1.0 - cfg.gamma)).ln();
            let u = scale * raw + prior;
            Ok(1.0 / (1.0 + (-u).exp()))
        }
    }
}
