//! Membership-game evaluation: ROC curves under the strict-greater threshold
//! rule, trapezoidal AUC, TPR at a fixed low FPR, aggregation across target
//! models, and inter-attack agreement matrices.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score table needs at least one member and one non-member")]
    DegenerateLabels,
    #[error("prediction sets cover different record sets")]
    IndexMismatch,
    #[error("need at least {needed} tables, got {got}")]
    NotEnoughTables { needed: usize, got: usize },
}

/// One scored candidate record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub record_index: usize,
    pub score: f64,
    pub is_member: bool,
}

/// Scores of one attack against one target model.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub attack_id: String,
    pub target_model_id: usize,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(attack_id: impl Into<String>, target_model_id: usize, rows: Vec<ScoreRow>) -> Self {
        Self {
            attack_id: attack_id.into(),
            target_model_id,
            rows,
        }
    }
}

/// A threshold-swept ROC curve. Points run from (0, 0) at threshold +inf to
/// (1, 1) at -inf, with both coordinates nondecreasing.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

/// Sweep "member iff score > threshold" over the distinct scores plus
/// the +-infinity endpoints.
pub fn roc_curve(table: &ScoreTable) -> Result<RocCurve, EvalError> {
    let members = table.rows.iter().filter(|r| r.is_member).count();
    let non_members = table.rows.len() - members;
    if members == 0 || non_members == 0 {
        return Err(EvalError::DegenerateLabels);
    }

    // descending by score, so the sweep adds rows as the threshold drops
    let mut sorted: Vec<&ScoreRow> = table.rows.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        // consume the whole tie group: the strict rule admits all or none
        let score = sorted[i].score;
        while i < sorted.len() && sorted[i].score == score {
            if sorted[i].is_member {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / non_members as f64, tp as f64 / members as f64));
    }
    debug_assert_eq!(points.last(), Some(&(1.0, 1.0)));
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            (x2 - x1) * (y1 + y2) / 2.0
        })
        .sum()
}

/// TPR at the largest achievable FPR at most `q` (step-function convention).
pub fn tpr_at_fpr(curve: &RocCurve, q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "q must be in (0, 1)");
    curve
        .points
        .iter()
        .filter(|(fpr, _)| *fpr <= q)
        .map(|(_, tpr)| *tpr)
        .fold(0.0, f64::max)
}

/// TPR at exactly `q`, linearly interpolated between the surrounding curve
/// points.
pub fn tpr_at_fpr_interpolated(curve: &RocCurve, q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "q must be in (0, 1)");
    let pts = &curve.points;
    let mut below = (0.0, 0.0);
    for &(fpr, tpr) in pts {
        if fpr <= q {
            below = (fpr, tpr.max(below.1));
        } else {
            let above = (fpr, tpr);
            if above.0 == below.0 {
                return below.1;
            }
            let t = (q - below.0) / (above.0 - below.0);
            return below.1 + t * (above.1 - below.1);
        }
    }
    below.1
}

/// Largest threshold whose realized FPR does not exceed `q`, with that FPR.
/// Predictions are "score > threshold".
pub fn threshold_at_fpr(table: &ScoreTable, q: f64) -> Result<(f64, f64), EvalError> {
    assert!(q > 0.0 && q < 1.0, "q must be in (0, 1)");
    let mut non_member_scores: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| !r.is_member)
        .map(|r| r.score)
        .collect();
    let members = table.rows.len() - non_member_scores.len();
    if members == 0 || non_member_scores.is_empty() {
        return Err(EvalError::DegenerateLabels);
    }
    non_member_scores.sort_by(f64::total_cmp);
    let n = non_member_scores.len();
    // admit the top k non-members with k/n <= q; threshold at the (k+1)-th
    // largest score keeps exactly the k scores strictly above it. The nudge
    // keeps k/n achievable when q*n rounds just below an integer.
    let mut k = (((q * n as f64) + 1e-9).floor() as usize).min(n - 1);
    let mut threshold = non_member_scores[n - 1 - k];
    // ties at the threshold may admit fewer than k; recompute realized fpr
    let mut realized =
        non_member_scores.iter().filter(|&&s| s > threshold).count() as f64 / n as f64;
    // ties never push realized above q (they only exclude), but a lower k
    // could beat a degenerate all-tied column; clamp for the k = 0 case
    while realized > q && k > 0 {
        k -= 1;
        threshold = non_member_scores[n - 1 - k];
        realized = non_member_scores.iter().filter(|&&s| s > threshold).count() as f64 / n as f64;
    }
    Ok((threshold, realized))
}

/// Per-attack aggregate over target models.
#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub attack_id: String,
    pub models: usize,
    pub auc_mean: f64,
    /// Sample standard deviation; absent with a single model.
    pub auc_std: Option<f64>,
    pub tpr_at_1pct_mean: f64,
    pub tpr_at_0p1pct_mean: f64,
    pub per_model_auc: Vec<f64>,
}

/// Aggregate score tables of one attack across its target models.
pub fn aggregate(tables: &[&ScoreTable]) -> Result<AttackSummary, EvalError> {
    if tables.is_empty() {
        return Err(EvalError::NotEnoughTables { needed: 1, got: 0 });
    }
    let attack_id = tables[0].attack_id.clone();
    let mut aucs = Vec::with_capacity(tables.len());
    let mut tpr1 = Vec::with_capacity(tables.len());
    let mut tpr01 = Vec::with_capacity(tables.len());
    for t in tables {
        let curve = roc_curve(t)?;
        aucs.push(auc(&curve));
        tpr1.push(tpr_at_fpr(&curve, 0.01));
        tpr01.push(tpr_at_fpr(&curve, 0.001));
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let std = if aucs.len() >= 2 {
        Some((aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    Ok(AttackSummary {
        attack_id,
        models: aucs.len(),
        auc_mean: mean,
        auc_std: std,
        tpr_at_1pct_mean: tpr1.iter().sum::<f64>() / n,
        tpr_at_0p1pct_mean: tpr01.iter().sum::<f64>() / n,
        per_model_auc: aucs,
    })
}

/// Pairwise agreement between attacks (plus ground truth), restricted to
/// members above the diagonal and to non-members below it.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementMatrix {
    /// Attack names followed by "GT".
    pub names: Vec<String>,
    /// `entries[i][j]`: member agreement for `i < j`, non-member agreement
    /// for `i > j`, 1.0 on the diagonal.
    pub entries: Vec<Vec<f64>>,
}

/// Compute the agreement matrix from per-attack boolean predictions over a
/// shared record set. Predictions are expected to be thresholded at a common
/// nominal FPR already.
pub fn agreement_matrix(
    prediction_sets: &[(String, Vec<bool>)],
    labels: &[bool],
) -> Result<AgreementMatrix, EvalError> {
    if prediction_sets.iter().any(|(_, p)| p.len() != labels.len()) {
        return Err(EvalError::IndexMismatch);
    }
    let mut names: Vec<String> = prediction_sets.iter().map(|(n, _)| n.clone()).collect();
    names.push("GT".into());
    let mut all: Vec<&[bool]> = prediction_sets.iter().map(|(_, p)| p.as_slice()).collect();
    all.push(labels);

    let k = all.len();
    let agreement = |a: &[bool], b: &[bool], members: bool| -> f64 {
        let mut same = 0usize;
        let mut total = 0usize;
        for i in 0..labels.len() {
            if labels[i] == members {
                total += 1;
                if a[i] == b[i] {
                    same += 1;
                }
            }
        }
        if total == 0 {
            f64::NAN
        } else {
            same as f64 / total as f64
        }
    };

    let mut entries = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i < j {
                entries[i][j] = agreement(all[i], all[j], true);
            } else if i > j {
                entries[i][j] = agreement(all[i], all[j], false);
            }
        }
    }
    Ok(AgreementMatrix { names, entries })
}
