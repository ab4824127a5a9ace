//! Membership scoring functions: LOSS, SIF, IHA (exact and CG paths, term
//! masks, partial training-set knowledge), LiRA online/offline, the
//! leave-one-out L-attack, and LiRA-L.
//!
//! Every scorer returns "higher means more member-like"; downstream ROC
//! logic only consumes ranks.

mod context;
mod iha;
mod reference;

pub use context::{
    prepare_target_context, CgSettings, ContextMode, HessianOperator, TargetContext,
};
pub use iha::{
    iha_score, iha_terms, IhaConfig, IhaScorer, IhaTerms, OutputMode, TargetKind, TermMask,
};
pub use reference::{
    l_attack_score, lira_l_score, lira_score, logit_confidence, LiraMode, LiraOutcome,
    LiraStatistic,
};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::{self, ModelError, ModelSpec, ParameterVector, Record};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("missing context: {0}")]
    MissingContext(String),
    #[error("need at least {needed} reference statistics, got {got}")]
    InsufficientReferences { needed: usize, got: usize },
    #[error("conditioning not supported on this path: {0}")]
    UnsupportedConditioning(String),
    #[error("conjugate gradient stopped at residual {residual} after {iterations} iterations")]
    CgNotConverged { residual: f64, iterations: usize },
    #[error("term mask selects no terms")]
    EmptyTermMask,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// LOSS attack: the negative per-record loss.
pub fn loss_attack(spec: &ModelSpec, w: &ParameterVector, z: &Record) -> Result<f64, AttackError> {
    Ok(-model::loss(spec, w, z)?)
}

/// Self-influence score `g' H^{-1} g` of the record's own gradient.
pub fn sif_score(
    ctx: &TargetContext,
    z: &Record,
    policy: crate::linalg::ConditioningPolicy,
    cg: &CgSettings,
) -> Result<f64, AttackError> {
    let g = model::grad(&ctx.spec, &ctx.w, z)?;
    let inv = ctx.hessian.apply_inverse(policy, &g, cg)?;
    Ok(g.iter().zip(&inv).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ConditioningPolicy, EigenDecomposition};
    use crate::model::{Label, LossKind};

    #[test]
    fn loss_attack_is_negated_loss() {
        let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
        let w = ParameterVector::new(&spec, vec![1.0, 1.0]).unwrap();
        let z = Record::new(vec![1.0, 2.0], Label::Target(0.0));
        assert_eq!(loss_attack(&spec, &w, &z).unwrap(), -9.0);
        let fit = Record::new(vec![1.0, 2.0], Label::Target(3.0));
        assert_eq!(loss_attack(&spec, &w, &fit).unwrap(), 0.0);
    }

    #[test]
    fn loss_attack_reverses_the_loss_ranking() {
        let spec = ModelSpec::linear(LossKind::SquaredError, 1, 1);
        let w = ParameterVector::new(&spec, vec![1.0]).unwrap();
        let records: Vec<Record> = (0..10)
            .map(|i| Record::new(vec![1.0], Label::Target(i as f64 / 3.0)))
            .collect();
        let mut by_loss: Vec<usize> = (0..10).collect();
        by_loss.sort_by(|&a, &b| {
            crate::model::loss(&spec, &w, &records[a])
                .unwrap()
                .total_cmp(&crate::model::loss(&spec, &w, &records[b]).unwrap())
        });
        let mut by_score: Vec<usize> = (0..10).collect();
        by_score.sort_by(|&a, &b| {
            loss_attack(&spec, &w, &records[b])
                .unwrap()
                .total_cmp(&loss_attack(&spec, &w, &records[a]).unwrap())
        });
        assert_eq!(by_loss, by_score);
    }

    #[test]
    fn sif_diagonal_case() {
        // g = (1, 0), H = diag(2, 4), eps = 0 -> 0.5
        let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
        // linear squared loss: grad = 2 (w'x - y) x; x = (1, 0), w = (0.5, 0), y = 0
        let w = ParameterVector::new(&spec, vec![0.5, 0.0]).unwrap();
        let z = Record::new(vec![1.0, 0.0], Label::Target(0.0));
        let eig =
            EigenDecomposition::from_parts(2, vec![4.0, 2.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let ctx = TargetContext {
            spec: spec.clone(),
            w: w.clone(),
            hessian: HessianOperator::Eigen(eig),
            grad_train: vec![0.0, 0.0],
            member_count: 1,
            members: Vec::new(),
            member_indices: Vec::new(),
            train_loss: Some(0.25),
        };
        let s = sif_score(
            &ctx,
            &z,
            ConditioningPolicy::Damped { epsilon: 0.0 },
            &CgSettings::default(),
        )
        .unwrap();
        // g = (1, 0): g' H^{-1} g = 1/2
        approx::assert_relative_eq!(s, 0.5, max_relative = 1e-12);

        let fit = Record::new(vec![1.0, 0.0], Label::Target(0.5));
        let zero = sif_score(
            &ctx,
            &fit,
            ConditioningPolicy::Damped { epsilon: 0.0 },
            &CgSettings::default(),
        )
        .unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn sif_is_invariant_to_eigenbasis_within_degenerate_eigenspaces() {
        // H = 3 I has every orthonormal basis as an eigenbasis
        let axis =
            EigenDecomposition::from_parts(2, vec![3.0, 3.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let rotated = EigenDecomposition::from_parts(2, vec![3.0, 3.0], vec![r, r, r, -r]).unwrap();
        let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
        let w = ParameterVector::new(&spec, vec![0.3, -0.4]).unwrap();
        let z = Record::new(vec![0.7, 0.2], Label::Target(1.0));
        let mk = |eig| TargetContext {
            spec: spec.clone(),
            w: w.clone(),
            hessian: HessianOperator::Eigen(eig),
            grad_train: vec![0.0, 0.0],
            member_count: 1,
            members: Vec::new(),
            member_indices: Vec::new(),
            train_loss: Some(1.0),
        };
        let policy = ConditioningPolicy::Damped { epsilon: 0.1 };
        let a = sif_score(&mk(axis), &z, policy, &CgSettings::default()).unwrap();
        let b = sif_score(&mk(rotated), &z, policy, &CgSettings::default()).unwrap();
        approx::assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn sif_matches_dense_solve_oracle() {
        use nalgebra::{DMatrix, DVector};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let dim = 6;
        let spec = ModelSpec::linear(LossKind::SquaredError, dim, 1);
        let w = ParameterVector::new(&spec, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let z = Record::new(
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Label::Target(0.3),
        );
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let a_dense = &b * b.transpose() / dim as f64 + DMatrix::identity(dim, dim);
        let sym = crate::linalg::SymMatrix::from_average(dim, a_dense.transpose().as_slice());
        let ctx = TargetContext {
            spec: spec.clone(),
            w: w.clone(),
            hessian: HessianOperator::Eigen(crate::linalg::sym_eigendecompose(&sym).unwrap()),
            grad_train: vec![0.0; dim],
            member_count: 1,
            members: Vec::new(),
            member_indices: Vec::new(),
            train_loss: Some(1.0),
        };
        let got = sif_score(
            &ctx,
            &z,
            ConditioningPolicy::Damped { epsilon: 0.0 },
            &CgSettings::default(),
        )
        .unwrap();
        let g = crate::model::grad(&spec, &w, &z).unwrap();
        let rhs = DVector::from_column_slice(&g);
        let solved = a_dense.lu().solve(&rhs).unwrap();
        let want: f64 = g.iter().zip(solved.iter()).map(|(a, b)| a * b).sum();
        approx::assert_relative_eq!(got, want, max_relative = 1e-8);
    }
}
