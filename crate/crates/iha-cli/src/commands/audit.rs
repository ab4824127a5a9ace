//! `iha audit`: score one attack against one or all target models and write
//! the score tables plus config sidecars.

use std::path::Path;

use serde_json::json;

use iha_core::attacks::{CgSettings, ContextMode, HessianOperator, TargetContext};
use iha_core::eval::ScoreTable;
use iha_core::game::MembershipGame;
use iha_core::linalg::EigenDecomposition;
use iha_core::model::{self, Record};
use iha_core::seeds::{derive, Stream};

use crate::artifacts::{load_game, write_atomic, Layout};
use crate::config::{AttackConfig, ExperimentConfig, HessianMode};
use crate::CliError;

pub fn run(
    config: &ExperimentConfig,
    attack_id: &str,
    target: Option<usize>,
) -> Result<(), CliError> {
    let attack = config
        .attacks
        .iter()
        .find(|a| a.attack_id() == attack_id)
        .ok_or_else(|| CliError::UnknownAttack(attack_id.to_string()))?;
    let layout = Layout::new(config.resolved_output_dir());
    let game = load_game(config, &layout)?;
    let targets: Vec<usize> = match target {
        Some(t) => vec![t],
        None => (0..game.models.len()).collect(),
    };
    for t in targets {
        let table = score_one(config, attack, &game, &layout, t)?;
        write_table(&layout, &table)?;
        write_sidecar(config, attack, &layout, &table, t)?;
        println!(
            "audited {} model {t}: {} candidates -> {}",
            table.attack_id,
            table.rows.len(),
            layout.scores(&table.attack_id, t).display()
        );
    }
    Ok(())
}

fn hessian_context(
    game: &MembershipGame,
    layout: &Layout,
    target: usize,
    mode: HessianMode,
) -> Result<TargetContext, CliError> {
    match mode {
        HessianMode::Cg => Ok(game.prepare_context(target, ContextMode::HvpOnly)?),
        HessianMode::Exact => {
            let path = layout.eigen(target);
            let eig = EigenDecomposition::load(&path)
                .map_err(|_| CliError::MissingArtifact { path: path.clone() })?;
            if eig.dim() != game.spec.param_count() {
                return Err(CliError::Config(format!(
                    "{}: dimension {} does not match the model ({} parameters)",
                    path.display(),
                    eig.dim(),
                    game.spec.param_count()
                )));
            }
            let model = &game.models[target];
            let member_indices = model.mask.member_indices();
            let members: Vec<Record> = member_indices
                .iter()
                .map(|&i| game.dataset.record(i).clone())
                .collect();
            let refs: Vec<&Record> = members.iter().collect();
            let (train_loss, grad_train) =
                model::dataset_loss_grad(&game.spec, &model.params, &refs)?;
            Ok(TargetContext {
                spec: game.spec.clone(),
                w: model.params.clone(),
                hessian: HessianOperator::Eigen(eig),
                grad_train,
                member_count: members.len(),
                members,
                member_indices,
                train_loss: Some(train_loss),
            })
        }
    }
}

fn score_one(
    config: &ExperimentConfig,
    attack: &AttackConfig,
    game: &MembershipGame,
    layout: &Layout,
    target: usize,
) -> Result<ScoreTable, CliError> {
    if target >= game.models.len() {
        return Err(CliError::Config(format!(
            "target {target} out of range ({} models)",
            game.models.len()
        )));
    }
    let table = match attack {
        AttackConfig::Loss => game.audit_loss(target)?,
        AttackConfig::Sif { mode, conditioning } => {
            let ctx = hessian_context(game, layout, target, *mode)?;
            game.audit_sif(
                target,
                &ctx,
                conditioning.unwrap_or_default(),
                &CgSettings::default(),
            )?
        }
        AttackConfig::Iha {
            mode,
            term_mask,
            conditioning,
            l0_fraction,
            l0_seed,
            output_mode,
            ..
        } => {
            let ctx = hessian_context(game, layout, target, *mode)?;
            let cfg = config.iha_config(
                *term_mask,
                *conditioning,
                *l0_fraction,
                *l0_seed,
                *output_mode,
            );
            game.audit_iha(target, &ctx, cfg, &attack.attack_id())?
        }
        AttackConfig::Lira { mode, statistic } => game.audit_lira(
            target,
            *mode,
            statistic.unwrap_or(iha_core::attacks::LiraStatistic::Loss),
        )?,
        AttackConfig::LAttack {
            refs_per_record,
            max_candidates,
        } => {
            game.audit_leave_one_out(target, *refs_per_record, *max_candidates)?
                .0
        }
        AttackConfig::LiraL {
            refs_per_record,
            max_candidates,
        } => {
            game.audit_leave_one_out(target, *refs_per_record, *max_candidates)?
                .1
        }
    };
    Ok(table)
}

pub fn write_table(layout: &Layout, table: &ScoreTable) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["record_index", "attack", "score", "is_member"])
        .map_err(csv_err)?;
    for row in &table.rows {
        writer
            .write_record([
                row.record_index.to_string(),
                table.attack_id.clone(),
                row.score.to_string(),
                if row.is_member { "1" } else { "0" }.to_string(),
            ])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| csv_err(e.into_error().into()))?;
    write_atomic(
        &layout.scores(&table.attack_id, table.target_model_id),
        &bytes,
    )
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn write_sidecar(
    config: &ExperimentConfig,
    attack: &AttackConfig,
    layout: &Layout,
    table: &ScoreTable,
    target: usize,
) -> Result<(), CliError> {
    let mut body = json!({
        "config_hash": config.hash(),
        "attack_id": table.attack_id,
        "attack": attack,
        "target_model": target,
        "candidates": table.rows.len(),
        "conventions": {
            "score_orientation": "higher_is_member_like",
        },
    });
    // defaults applied at scoring time, spelled out for reproducibility
    match attack {
        AttackConfig::Sif { conditioning, .. } => {
            body["resolved_conditioning"] = serde_json::to_value(conditioning.unwrap_or_default())?;
        }
        AttackConfig::Iha {
            conditioning,
            term_mask,
            output_mode,
            ..
        } => {
            body["resolved_conditioning"] = serde_json::to_value(conditioning.unwrap_or_default())?;
            body["resolved_term_mask"] = serde_json::to_value(term_mask.unwrap_or_default())?;
            body["resolved_output_mode"] = serde_json::to_value(
                output_mode.unwrap_or(iha_core::attacks::OutputMode::RawScore),
            )?;
        }
        AttackConfig::Lira { statistic, .. } => {
            body["resolved_statistic"] =
                serde_json::to_value(statistic.unwrap_or(iha_core::attacks::LiraStatistic::Loss))?;
        }
        _ => {}
    }
    if let AttackConfig::Iha {
        l0_fraction,
        l0_seed,
        ..
    } = attack
    {
        if *l0_fraction < 1.0 {
            let seeds: Vec<serde_json::Value> = table
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "record_index": r.record_index,
                        "seed": derive(*l0_seed, Stream::PartialL0, r.record_index as u64),
                    })
                })
                .collect();
            body["partial_l0"] = json!({
                "fraction": l0_fraction,
                "base_seed": l0_seed,
                "per_record_seeds": seeds,
            });
        }
    }
    let path = layout.score_sidecar(&table.attack_id, target);
    let mut bytes = serde_json::to_vec_pretty(&body)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)
}

/// Read a score table back from its CSV.
pub fn read_table(path: &Path, target: usize) -> Result<ScoreTable, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    let mut attack_id = String::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        attack_id = record[1].to_string();
        rows.push(iha_core::eval::ScoreRow {
            record_index: record[0].parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: bad record_index '{}'",
                    path.display(),
                    &record[0]
                ))
            })?,
            score: record[2].parse().map_err(|_| {
                CliError::Config(format!("{}: bad score '{}'", path.display(), &record[2]))
            })?,
            is_member: &record[3] == "1",
        });
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{} has no rows", path.display())));
    }
    Ok(ScoreTable::new(attack_id, target, rows))
}
