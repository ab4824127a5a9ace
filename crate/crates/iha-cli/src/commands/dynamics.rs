//! `iha dynamics verify`: simulate SGD on quadratic instances where the
//! stationary theory holds exactly and report theoretical vs empirical
//! matrices with their relative Frobenius errors.

use std::path::Path;

use serde_json::json;

use iha_core::data::Dataset;
use iha_core::dynamics::{
    fluctuation_empirical, fluctuation_theory, log_posterior, noise_covariance_empirical,
    noise_covariance_theory, StationaryContext,
};
use iha_core::linalg::{sym_eigendecompose, ConditioningPolicy, SymMatrix};
use iha_core::model::{self, Label, LossKind, ModelSpec, ParameterVector, Record};
use iha_core::training::{capture_trajectory, Sampling, SgdConfig};

use crate::artifacts::write_json;
use crate::CliError;

/// 2-D quadratic with eigenvalues (19, 3.8) in a rotated basis; the minimum
/// sits exactly at the origin with loss 0.5.
fn rotated_quadratic(copies: usize) -> (ModelSpec, Dataset) {
    let spec = ModelSpec::linear(LossKind::SquaredError, 2, 1);
    let c = 0.5f64.sqrt();
    let r = 0.5f64.sqrt();
    let a1 = 19.0f64.sqrt();
    let a2 = 3.8f64.sqrt();
    let base = [
        (vec![a1 * r, a1 * r], c),
        (vec![-a1 * r, -a1 * r], c),
        (vec![a2 * r, -a2 * r], c),
        (vec![-a2 * r, a2 * r], c),
    ];
    let mut records = Vec::with_capacity(4 * copies);
    for _ in 0..copies {
        for (x, y) in &base {
            records.push(Record::new(x.clone(), Label::Target(*y)));
        }
    }
    (
        spec,
        Dataset::new("rotated-quadratic", 2, 1, records).expect("non-empty"),
    )
}

fn context(
    spec: &ModelSpec,
    dataset: &Dataset,
    cfg: SgdConfig,
) -> Result<(ParameterVector, StationaryContext), CliError> {
    let w_star = ParameterVector::zeros(spec);
    let refs: Vec<&Record> = dataset.records().iter().collect();
    let (l_star, _) = model::dataset_loss_grad(spec, &w_star, &refs)?;
    let h = model::exact_hessian(spec, &w_star, &refs)?;
    let ctx = StationaryContext::new(
        w_star.values().to_vec(),
        l_star,
        sym_eigendecompose(&h)?,
        cfg,
        dataset.len(),
        ConditioningPolicy::Damped { epsilon: 0.0 },
    )?;
    Ok((w_star, ctx))
}

fn flat(m: &SymMatrix) -> Vec<f64> {
    m.entries().to_vec()
}

pub fn run(trials: usize, samples: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = SgdConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 0.0,
        batch_size: 128,
        epochs: 1,
        seed,
        sampling: Sampling::Iid,
    };
    let (spec, dataset) = rotated_quadratic(64);
    let (w_star, ctx) = context(&spec, &dataset, cfg.clone())?;

    // noise covariance
    let noise_theory = noise_covariance_theory(&ctx);
    let noise_empirical = noise_covariance_empirical(
        &spec,
        &dataset,
        &w_star,
        cfg.batch_size,
        trials.max(2),
        seed ^ 0xabcd,
    )?;
    let noise_rel = noise_empirical.rel_frobenius_distance(&noise_theory);

    // stationary fluctuation
    let fluct_theory = fluctuation_theory(&ctx)?;
    let thin = 20;
    let burn_in = 10_000;
    let snapshots = capture_trajectory(&spec, &dataset, &cfg, burn_in, samples.max(2), thin)?;
    let fluct_empirical = fluctuation_empirical(&snapshots)?;
    let fluct_rel = fluct_empirical.rel_frobenius_distance(&fluct_theory);

    // posterior vs Gaussian log-density differences; the covariance is 2x2
    // so the inverse is closed-form
    let (s00, s01, s11) = (
        fluct_theory.get(0, 0),
        fluct_theory.get(0, 1),
        fluct_theory.get(1, 1),
    );
    let det = s00 * s11 - s01 * s01;
    let logdet = det.ln();
    let gaussian_lp = move |w: &ParameterVector| -> f64 {
        let (x, y) = (w.values()[0], w.values()[1]);
        let quad = (s11 * x * x - 2.0 * s01 * x * y + s00 * y * y) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * quad
    };
    let mut posterior_max_diff: f64 = 0.0;
    for k in 0..50u64 {
        let point = |s: u64| {
            let a = iha_core::seeds::unit_f64(iha_core::seeds::mix64(seed ^ s)) - 0.5;
            let b = iha_core::seeds::unit_f64(iha_core::seeds::mix64(seed ^ (s + 1000))) - 0.5;
            ParameterVector::new(&spec, vec![0.4 * a, 0.4 * b]).expect("dim 2")
        };
        let (w1, w2) = (point(2 * k), point(2 * k + 1));
        let dt = log_posterior(&w1, &ctx)? - log_posterior(&w2, &ctx)?;
        let dg = gaussian_lp(&w1) - gaussian_lp(&w2);
        posterior_max_diff = posterior_max_diff.max((dt - dg).abs());
    }

    let report = json!({
        "instance": {
            "kind": "rotated_quadratic",
            "dim": 2,
            "records": dataset.len(),
            "hessian_eigenvalues": ctx.hessian.eigenvalues(),
            "loss_at_minimum": ctx.l_star,
        },
        "sgd": cfg,
        "seed": seed,
        "noise_covariance": {
            "trials": trials.max(2),
            "theory": flat(&noise_theory),
            "empirical": flat(&noise_empirical),
            "relative_frobenius_error": noise_rel,
        },
        "fluctuation": {
            "samples": samples.max(2),
            "thin": thin,
            "burn_in": burn_in,
            "theory": flat(&fluct_theory),
            "empirical": flat(&fluct_empirical),
            "relative_frobenius_error": fluct_rel,
        },
        "posterior_vs_gaussian": {
            "pairs": 50,
            "max_log_density_difference": posterior_max_diff,
        },
    });

    match out {
        Some(path) => {
            write_json(path, &report)?;
            println!("dynamics report written to {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}
