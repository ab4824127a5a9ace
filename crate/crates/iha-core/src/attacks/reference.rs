//! Reference-model attacks: LiRA (online/offline) and the leave-one-out
//! L-attack, plus their composition LiRA-L.
//!
//! All statistics are oriented "lower means more member-like" (loss-like);
//! logit confidences are negated by [`logit_confidence`]'s callers before
//! they reach these functions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AttackError;
use crate::model::{self, Label, LossKind, ModelSpec, ParameterVector, Record};

/// Variance floor for degenerate Gaussian fits.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiraMode {
    /// Log-likelihood ratio between per-record "in" and "out" Gaussian fits.
    Online,
    /// One-sided tail probability under the "out" fit alone.
    Offline,
}

/// Which per-record statistic the reference models produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiraStatistic {
    /// The per-record loss.
    Loss,
    /// Negated logit-scaled confidence of the true class, so the orientation
    /// matches the loss statistic.
    LogitConfidence,
}

/// A LiRA score plus a flag noting whether a degenerate fit had to be
/// floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiraOutcome {
    pub score: f64,
    pub variance_floored: bool,
}

fn gaussian_fit(stats: &[f64]) -> (f64, f64, bool) {
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var < VARIANCE_FLOOR {
        (mean, VARIANCE_FLOOR.sqrt(), true)
    } else {
        (mean, var.sqrt(), false)
    }
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - std.ln() - 0.5 * z * z
}

/// Likelihood-ratio membership score for one record.
pub fn lira_score(
    target_stat: f64,
    in_stats: &[f64],
    out_stats: &[f64],
    mode: LiraMode,
) -> Result<LiraOutcome, AttackError> {
    if out_stats.len() < 2 {
        return Err(AttackError::InsufficientReferences {
            needed: 2,
            got: out_stats.len(),
        });
    }
    let (out_mean, out_std, out_floored) = gaussian_fit(out_stats);
    match mode {
        LiraMode::Online => {
            if in_stats.len() < 2 {
                return Err(AttackError::InsufficientReferences {
                    needed: 2,
                    got: in_stats.len(),
                });
            }
            let (in_mean, in_std, in_floored) = gaussian_fit(in_stats);
            Ok(LiraOutcome {
                score: log_normal_pdf(target_stat, in_mean, in_std)
                    - log_normal_pdf(target_stat, out_mean, out_std),
                variance_floored: in_floored || out_floored,
            })
        }
        LiraMode::Offline => {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            // loss-like statistics sit below the out distribution for members
            let score = 1.0 - normal.cdf((target_stat - out_mean) / out_std);
            Ok(LiraOutcome {
                score,
                variance_floored: out_floored,
            })
        }
    }
}

/// Leave-one-out attack: the fraction of reference losses strictly greater
/// than the target loss, ties counting half. Thresholding this score at
/// `1 - q` realizes a false positive rate of `q` under the reference
/// distribution.
pub fn l_attack_score(target_loss: f64, ref_losses: &[f64]) -> Result<f64, AttackError> {
    if ref_losses.len() < 2 {
        return Err(AttackError::InsufficientReferences {
            needed: 2,
            got: ref_losses.len(),
        });
    }
    let n = ref_losses.len() as f64;
    let greater = ref_losses.iter().filter(|&&r| r > target_loss).count() as f64;
    let ties = ref_losses.iter().filter(|&&r| r == target_loss).count() as f64;
    Ok((greater + 0.5 * ties) / n)
}

/// LiRA-L: the offline LiRA test fed with leave-one-out reference losses.
/// Kept as a thin wrapper so the L-attack and LiRA-L share one reference
/// set by construction.
pub fn lira_l_score(target_loss: f64, loo_ref_losses: &[f64]) -> Result<LiraOutcome, AttackError> {
    lira_score(target_loss, &[], loo_ref_losses, LiraMode::Offline)
}

/// Logit-scaled confidence `ln(p_y / (1 - p_y))` of the true class, negated
/// so higher-confidence records score lower (loss-like orientation).
/// Squared-error models fall back to the plain loss.
pub fn logit_confidence(
    spec: &ModelSpec,
    w: &ParameterVector,
    z: &Record,
) -> Result<f64, AttackError> {
    match (spec.loss, z.label) {
        (LossKind::CrossEntropy, Label::Class(_)) => {
            // l = -ln p_y, so p_y = exp(-l)
            let p = (-model::loss(spec, w, z)?).exp().clamp(1e-12, 1.0 - 1e-12);
            Ok(-(p / (1.0 - p)).ln())
        }
        _ => Ok(model::loss(spec, w, z)?),
    }
}
