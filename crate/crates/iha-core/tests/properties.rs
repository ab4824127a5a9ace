//! Property tests for the solver-oracle equivalences and the evaluation
//! invariants.

use iha_core::data::synth_tabular;
use iha_core::eval::{auc, roc_curve, tpr_at_fpr, ScoreRow, ScoreTable};
use iha_core::linalg::{
    cg_solve, conditioned_inverse_apply, sym_eigendecompose, ConditioningPolicy, SymMatrix,
};
use iha_core::model::{LossKind, ModelSpec, ParameterVector};
use iha_core::training::{sgd_step, SgdConfig, SgdState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(dim: usize, seed: u64) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // diagonally dominant symmetric matrix: eigenvalues stay positive
    let mut m = SymMatrix::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    m = SymMatrix::from_fn(dim, |i, j| {
        if i == j {
            m.get(i, j) + dim as f64
        } else {
            m.get(i, j)
        }
    });
    m
}

fn random_vec(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The CG solve and the eigendecomposition route compute the same damped
    /// inverse on SPD matrices of any size in the working range.
    #[test]
    fn cg_matches_the_eigendecomposition_oracle(
        dim in 10usize..=200,
        seed in 0u64..1000,
        damping in prop_oneof![Just(0.0), Just(0.2), Just(1.0)],
    ) {
        let a = random_spd(dim, seed);
        let eig = sym_eigendecompose(&a).unwrap();
        let v = random_vec(dim, seed ^ 0xbeef);
        let exact = conditioned_inverse_apply(
            &eig,
            ConditioningPolicy::Damped { epsilon: damping },
            &v,
        )
        .unwrap();
        let sol = cg_solve(|u| a.apply(u), &v, damping, 1e-12, 20 * dim).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(rel_err(&sol.x, &exact) < 1e-6);
    }

    /// Conditioned inverse application is linear in its argument.
    #[test]
    fn conditioned_inverse_is_linear(
        dim in 2usize..30,
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let m = random_spd(dim, seed);
        let eig = sym_eigendecompose(&m).unwrap();
        let policy = ConditioningPolicy::Damped { epsilon: 0.1 };
        let v = random_vec(dim, seed ^ 1);
        let w = random_vec(dim, seed ^ 2);
        let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = conditioned_inverse_apply(&eig, policy, &combo).unwrap();
        let fv = conditioned_inverse_apply(&eig, policy, &v).unwrap();
        let fw = conditioned_inverse_apply(&eig, policy, &w).unwrap();
        let rhs: Vec<f64> = fv.iter().zip(&fw).map(|(x, y)| a * x + b * y).collect();
        let scale: f64 = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-10 * scale.max(1.0));
        }
    }

    /// Undamped inverse application really inverts SPD matrices.
    #[test]
    fn damped_zero_is_the_exact_inverse(dim in 2usize..30, seed in 0u64..1000) {
        let m = random_spd(dim, seed);
        let eig = sym_eigendecompose(&m).unwrap();
        let v = random_vec(dim, seed ^ 3);
        let x = conditioned_inverse_apply(
            &eig,
            ConditioningPolicy::Damped { epsilon: 0.0 },
            &v,
        )
        .unwrap();
        // applying the matrix must give the right-hand side back
        prop_assert!(rel_err(&m.apply(&x), &v) < 1e-8);
    }

    /// The ranking metrics only see score order: any strictly increasing
    /// transform leaves the ROC curve and AUC unchanged.
    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        members in prop::collection::vec(-5.0f64..5.0, 1..40),
        non_members in prop::collection::vec(-5.0f64..5.0, 1..40),
        scale in 0.1f64..10.0,
        shift in -10.0f64..10.0,
    ) {
        let table = |ms: &[f64], ns: &[f64]| {
            let mut rows: Vec<ScoreRow> = ms
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoreRow { record_index: i, score: s, is_member: true })
                .collect();
            rows.extend(ns.iter().enumerate().map(|(i, &s)| ScoreRow {
                record_index: ms.len() + i,
                score: s,
                is_member: false,
            }));
            ScoreTable::new("p", 0, rows)
        };
        let base = auc(&roc_curve(&table(&members, &non_members)).unwrap());
        for transform in [
            Box::new(move |x: f64| scale * x + shift) as Box<dyn Fn(f64) -> f64>,
            Box::new(|x: f64| x.exp()),
        ] {
            let tm: Vec<f64> = members.iter().map(|&x| transform(x)).collect();
            let tn: Vec<f64> = non_members.iter().map(|&x| transform(x)).collect();
            let got = auc(&roc_curve(&table(&tm, &tn)).unwrap());
            prop_assert!((got - base).abs() < 1e-9, "base {base} transformed {got}");
        }
    }

    /// Loosening the FPR budget can only admit more true positives.
    #[test]
    fn tpr_at_fpr_is_nondecreasing(
        members in prop::collection::vec(-5.0f64..5.0, 1..40),
        non_members in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let mut rows: Vec<ScoreRow> = members
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoreRow { record_index: i, score: s, is_member: true })
            .collect();
        rows.extend(non_members.iter().enumerate().map(|(i, &s)| ScoreRow {
            record_index: members.len() + i,
            score: s,
            is_member: false,
        }));
        let curve = roc_curve(&ScoreTable::new("p", 0, rows)).unwrap();
        let mut prev = 0.0;
        for i in 1..50 {
            let t = tpr_at_fpr(&curve, i as f64 / 50.0);
            prop_assert!(t >= prev);
            prev = t;
        }
    }

    /// Without momentum the update collapses to vanilla SGD, exactly.
    #[test]
    fn momentum_free_steps_are_vanilla_sgd(
        w0 in prop::collection::vec(-2.0f64..2.0, 1..8),
        g in prop::collection::vec(-2.0f64..2.0, 1..8),
        lambda in 0.001f64..0.5,
    ) {
        let dim = w0.len().min(g.len());
        let (w0, g) = (&w0[..dim], &g[..dim]);
        let spec = ModelSpec::linear(LossKind::SquaredError, dim, 1);
        let cfg = SgdConfig {
            learning_rate: lambda,
            momentum: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        let state = SgdState::new(ParameterVector::new(&spec, w0.to_vec()).unwrap());
        let next = sgd_step(state, g, &cfg).unwrap();
        for i in 0..dim {
            prop_assert_eq!(next.w.values()[i], w0[i] - lambda * g[i]);
        }
    }

    /// Membership bits depend only on (seed, index): growing the dataset
    /// never flips earlier bits.
    #[test]
    fn masks_are_index_stable(seed in 0u64..500, n in 10usize..80, extra in 1usize..40) {
        let small = synth_tabular(3, n, 4, 2, 0.5).unwrap();
        let large = synth_tabular(3, n + extra, 4, 2, 0.5).unwrap();
        let a = iha_core::data::bernoulli_split(&small, 0.5, seed);
        let b = iha_core::data::bernoulli_split(&large, 0.5, seed);
        prop_assert_eq!(&a.bits[..], &b.bits[..n]);
    }
}
