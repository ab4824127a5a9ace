//! `iha evaluate`: metrics JSON (AUC mean/std, TPR at 1% and 0.1% FPR per
//! attack), plot-ready ROC CSVs, and the inter-attack agreement matrix.

use std::collections::BTreeMap;

use serde_json::json;

use iha_core::eval::{aggregate, agreement_matrix, roc_curve, threshold_at_fpr, ScoreTable};

use crate::artifacts::{write_atomic, write_json, Layout};
use crate::commands::audit::read_table;
use crate::config::ExperimentConfig;
use crate::CliError;

pub fn run(config: &ExperimentConfig) -> Result<(), CliError> {
    let layout = Layout::new(config.resolved_output_dir());

    // collect every (attack, model) table that exists on disk
    let mut by_attack: BTreeMap<String, Vec<ScoreTable>> = BTreeMap::new();
    for attack in &config.attacks {
        let id = attack.attack_id();
        let mut tables = Vec::new();
        for t in 0..config.num_models {
            let path = layout.scores(&id, t);
            if path.exists() {
                tables.push(read_table(&path, t)?);
            }
        }
        if !tables.is_empty() {
            by_attack.insert(id, tables);
        }
    }
    if by_attack.is_empty() {
        return Err(CliError::MissingArtifact {
            path: layout.scores(&config.attacks[0].attack_id(), 0),
        });
    }

    // per-attack aggregation and ROC emission
    let mut metrics = BTreeMap::new();
    for (id, tables) in &by_attack {
        let refs: Vec<&ScoreTable> = tables.iter().collect();
        let summary = aggregate(&refs)?;
        for table in tables {
            let curve = roc_curve(table)?;
            let mut csv = String::from("fpr,tpr\n");
            for (fpr, tpr) in &curve.points {
                csv.push_str(&format!("{fpr},{tpr}\n"));
            }
            write_atomic(&layout.roc(id, table.target_model_id), csv.as_bytes())?;
        }
        metrics.insert(id.clone(), summary);
    }

    let agreement = compute_agreement(config, &by_attack)?;
    if let Some(a) = &agreement {
        let mut csv = String::new();
        csv.push(',');
        csv.push_str(&a.names.join(","));
        csv.push('\n');
        for (name, row) in a.names.iter().zip(&a.mean_entries) {
            csv.push_str(name);
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        write_atomic(&layout.agreement(), csv.as_bytes())?;
    }

    let report = json!({
        "config_hash": config.hash(),
        "conventions": {
            "threshold_rule": "strict_greater",
            "tie_rule": "half_credit",
            "tpr_at_fpr": "step_function",
        },
        "attacks": metrics,
        "agreement": agreement.map(|a| json!({
            "nominal_fpr": config.agreement_fpr,
            "names": a.names,
            "mean_entries": a.mean_entries,
            "mean_realized_fpr": a.realized_fpr,
            "models_used": a.models_used,
        })),
    });
    write_json(&layout.metrics(), &report)?;
    println!("metrics written to {}", layout.metrics().display());
    Ok(())
}

struct AgreementReport {
    names: Vec<String>,
    mean_entries: Vec<Vec<f64>>,
    realized_fpr: BTreeMap<String, f64>,
    models_used: usize,
}

/// Per model: threshold each attack at the nominal FPR on the candidate set
/// shared by every attack, build the agreement matrix, then average the
/// matrices entrywise across models.
fn compute_agreement(
    config: &ExperimentConfig,
    by_attack: &BTreeMap<String, Vec<ScoreTable>>,
) -> Result<Option<AgreementReport>, CliError> {
    if by_attack.len() < 2 {
        return Ok(None);
    }
    let q = config.agreement_fpr;
    let attack_ids: Vec<&String> = by_attack.keys().collect();
    let mut sum: Option<Vec<Vec<f64>>> = None;
    let mut names: Option<Vec<String>> = None;
    let mut realized_sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut models_used = 0usize;

    for t in 0..config.num_models {
        let tables: Vec<&ScoreTable> = attack_ids
            .iter()
            .filter_map(|id| by_attack[*id].iter().find(|tb| tb.target_model_id == t))
            .collect();
        if tables.len() != attack_ids.len() {
            continue;
        }
        // records shared by all attacks for this model
        let mut common: Vec<usize> = tables[0].rows.iter().map(|r| r.record_index).collect();
        for table in &tables[1..] {
            let have: std::collections::HashSet<usize> =
                table.rows.iter().map(|r| r.record_index).collect();
            common.retain(|i| have.contains(i));
        }
        common.sort_unstable();
        if common.is_empty() {
            continue;
        }
        let common_set: std::collections::HashSet<usize> = common.iter().copied().collect();

        let labels: Vec<bool> = {
            let lookup: BTreeMap<usize, bool> = tables[0]
                .rows
                .iter()
                .map(|r| (r.record_index, r.is_member))
                .collect();
            common.iter().map(|i| lookup[i]).collect()
        };
        if labels.iter().all(|&b| b) || labels.iter().all(|&b| !b) {
            continue;
        }

        let mut prediction_sets = Vec::with_capacity(tables.len());
        for table in &tables {
            let restricted = ScoreTable::new(
                table.attack_id.clone(),
                t,
                table
                    .rows
                    .iter()
                    .filter(|r| common_set.contains(&r.record_index))
                    .cloned()
                    .collect(),
            );
            let (threshold, realized) = threshold_at_fpr(&restricted, q)?;
            *realized_sums.entry(table.attack_id.clone()).or_default() += realized;
            let by_index: BTreeMap<usize, f64> = restricted
                .rows
                .iter()
                .map(|r| (r.record_index, r.score))
                .collect();
            prediction_sets.push((
                table.attack_id.clone(),
                common.iter().map(|i| by_index[i] > threshold).collect(),
            ));
        }
        let m = agreement_matrix(&prediction_sets, &labels)?;
        match &mut sum {
            None => {
                names = Some(m.names);
                sum = Some(m.entries);
            }
            Some(s) => {
                for (srow, mrow) in s.iter_mut().zip(&m.entries) {
                    for (a, b) in srow.iter_mut().zip(mrow) {
                        *a += b;
                    }
                }
            }
        }
        models_used += 1;
    }

    let (Some(mut entries), Some(names)) = (sum, names) else {
        return Ok(None);
    };
    for row in &mut entries {
        for v in row {
            *v /= models_used as f64;
        }
    }
    let realized_fpr = realized_sums
        .into_iter()
        .map(|(k, v)| (k, v / models_used as f64))
        .collect();
    Ok(Some(AgreementReport {
        names,
        mean_entries: entries,
        realized_fpr,
        models_used,
    }))
}
