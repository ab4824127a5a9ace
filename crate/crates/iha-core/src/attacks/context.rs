//! Per-target-model context shared by the Hessian-based attacks.

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::data::{Dataset, MembershipMask};
use crate::linalg::{cg_solve, conditioned_inverse_apply, ConditioningPolicy, EigenDecomposition};
use crate::model::{self, ModelSpec, ParameterVector, Record};

/// Conjugate-gradient settings for the matrix-free inverse path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgSettings {
    pub tol: f64,
    /// 0 means `10 * dim`.
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 0,
        }
    }
}

impl CgSettings {
    fn iterations(&self, dim: usize) -> usize {
        if self.max_iter == 0 {
            10 * dim
        } else {
            self.max_iter
        }
    }
}

/// The shared inverse-Hessian oracle: either a precomputed eigendecomposition
/// or a matrix-free Hessian-vector-product operator solved with CG.
pub enum HessianOperator {
    Eigen(EigenDecomposition),
    HvpOnly {
        spec: ModelSpec,
        w: ParameterVector,
        records: Vec<Record>,
    },
}

impl HessianOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Eigen(e) => e.dim(),
            Self::HvpOnly { w, .. } => w.len(),
        }
    }

    /// Apply the conditioned inverse to `v`. The eigen route honors both
    /// policies; the CG route shares the damping semantics (it solves
    /// `(H + eps I) x = v`) and rejects low-rank truncation.
    pub fn apply_inverse(
        &self,
        policy: ConditioningPolicy,
        v: &[f64],
        cg: &CgSettings,
    ) -> Result<Vec<f64>, AttackError> {
        match self {
            Self::Eigen(e) => Ok(conditioned_inverse_apply(e, policy, v)?),
            Self::HvpOnly { spec, w, records } => {
                let epsilon = match policy {
                    ConditioningPolicy::Damped { epsilon } => epsilon,
                    ConditioningPolicy::LowRank { .. } => {
                        return Err(AttackError::UnsupportedConditioning(
                            "low-rank truncation needs the eigendecomposition; \
                             the CG path only damps"
                                .into(),
                        ))
                    }
                };
                let refs: Vec<&Record> = records.iter().collect();
                let sol = cg_solve(
                    |u| model::hvp(spec, w, &refs, u).expect("validated operator"),
                    v,
                    epsilon,
                    cg.tol,
                    cg.iterations(w.len()),
                )?;
                if !sol.converged {
                    return Err(AttackError::CgNotConverged {
                        residual: sol.residual_norm,
                        iterations: sol.iterations,
                    });
                }
                Ok(sol.x)
            }
        }
    }
}

/// How `prepare_target_context` realizes the inverse-Hessian oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Dense Hessian over the member records, eigendecomposed once.
    ExactHessian,
    /// Keep only a Hessian-vector-product oracle; inverses go through CG.
    HvpOnly,
}

/// Immutable per-target-model state: the audited parameters, the inverse
/// oracle over the member set, and the precomputed mean member gradient.
pub struct TargetContext {
    pub spec: ModelSpec,
    pub w: ParameterVector,
    pub hessian: HessianOperator,
    /// Mean unregularized gradient over the member set (the full-training
    /// gradient when the candidate is a member).
    pub grad_train: Vec<f64>,
    pub member_count: usize,
    /// Member records, kept for the HVP oracle and partial-knowledge
    /// resampling.
    pub members: Vec<Record>,
    /// Dataset index of each entry in `members`.
    pub member_indices: Vec<usize>,
    /// Final mean training loss, the observable stand-in for the loss at the
    /// minimum.
    pub train_loss: Option<f64>,
}

/// Precompute the target context for one trained model.
pub fn prepare_target_context(
    spec: &ModelSpec,
    w: &ParameterVector,
    dataset: &Dataset,
    mask: &MembershipMask,
    mode: ContextMode,
) -> Result<TargetContext, AttackError> {
    let member_indices = mask.member_indices();
    let members: Vec<Record> = member_indices
        .iter()
        .map(|&i| dataset.record(i).clone())
        .collect();
    if members.is_empty() {
        return Err(AttackError::MissingContext(
            "mask selects no members".into(),
        ));
    }
    let refs: Vec<&Record> = members.iter().collect();
    let (train_loss, grad_train) = model::dataset_loss_grad(spec, w, &refs)?;

    let hessian = match mode {
        ContextMode::ExactHessian => {
            let h = model::exact_hessian(spec, w, &refs)?;
            HessianOperator::Eigen(crate::linalg::sym_eigendecompose(&h)?)
        }
        ContextMode::HvpOnly => HessianOperator::HvpOnly {
            spec: spec.clone(),
            w: w.clone(),
            records: members.clone(),
        },
    };

    Ok(TargetContext {
        spec: spec.clone(),
        w: w.clone(),
        hessian,
        grad_train,
        member_count: members.len(),
        members,
        member_indices,
        train_loss: Some(train_loss),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bernoulli_split, synth_tabular};
    use crate::model::{Label, LossKind};

    #[test]
    fn single_member_context_uses_that_gradient() {
        let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
        let dataset = crate::data::Dataset::new(
            "one",
            2,
            1,
            vec![
                Record::new(vec![1.0, 2.0], Label::Target(0.0)),
                Record::new(vec![0.5, 0.5], Label::Target(1.0)),
            ],
        )
        .unwrap();
        let mask = MembershipMask {
            bits: vec![true, false],
            gamma: 0.5,
            seed: 0,
        };
        let w = ParameterVector::new(&spec, vec![1.0, 1.0]).unwrap();
        let ctx =
            prepare_target_context(&spec, &w, &dataset, &mask, ContextMode::ExactHessian).unwrap();
        assert_eq!(ctx.member_count, 1);
        assert_eq!(
            ctx.grad_train,
            model::grad(&spec, &w, dataset.record(0)).unwrap()
        );
        assert_eq!(ctx.train_loss, Some(9.0));
    }

    #[test]
    fn gradient_at_least_squares_minimum_is_tiny() {
        // solve the normal equations exactly, then the member gradient at w*
        // must vanish
        let dataset = synth_tabular(31, 60, 4, 2, 0.5).unwrap();
        let spec = ModelSpec::linear(LossKind::SquaredError, 4, 1);
        let mask = bernoulli_split(&dataset, 0.5, 9);
        let members: Vec<&Record> = mask
            .member_indices()
            .into_iter()
            .map(|i| dataset.record(i))
            .collect();
        // squared loss: H w = 2 mean(y x), H = 2 mean(x x')
        let targets: Vec<f64> = members
            .iter()
            .map(|r| match r.label {
                Label::Class(k) => k as f64,
                Label::Target(t) => t,
            })
            .collect();
        let d = 4;
        let mut h = nalgebra::DMatrix::zeros(d, d);
        let mut rhs = nalgebra::DVector::zeros(d);
        for (r, &y) in members.iter().zip(&targets) {
            for i in 0..d {
                rhs[i] += 2.0 * y * r.features[i] / members.len() as f64;
                for j in 0..d {
                    h[(i, j)] += 2.0 * r.features[i] * r.features[j] / members.len() as f64;
                }
            }
        }
        let w_star = h.lu().solve(&rhs).unwrap();
        // regression targets come from the class labels here
        let regression: Vec<Record> = dataset
            .records()
            .iter()
            .map(|r| {
                let y = match r.label {
                    Label::Class(k) => k as f64,
                    Label::Target(t) => t,
                };
                Record::new(r.features.clone(), Label::Target(y))
            })
            .collect();
        let reg_dataset = crate::data::Dataset::new("reg", 4, 2, regression).unwrap();
        let w = ParameterVector::new(&spec, w_star.iter().cloned().collect()).unwrap();
        let ctx =
            prepare_target_context(&spec, &w, &reg_dataset, &mask, ContextMode::HvpOnly).unwrap();
        let norm: f64 = ctx.grad_train.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm at the minimum: {norm}");
    }

    #[test]
    fn cg_path_rejects_low_rank() {
        let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
        let w = ParameterVector::new(&spec, vec![1.0, 0.0]).unwrap();
        let op = HessianOperator::HvpOnly {
            spec: spec.clone(),
            w,
            records: vec![Record::new(vec![1.0, 0.5], Label::Target(0.0))],
        };
        let err = op
            .apply_inverse(
                ConditioningPolicy::LowRank { epsilon: 0.1 },
                &[1.0, 0.0],
                &CgSettings::default(),
            )
            .unwrap_err();
        assert!(matches!(err, AttackError::UnsupportedConditioning(_)));
    }
}
