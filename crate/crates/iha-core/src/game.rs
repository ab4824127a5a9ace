//! The membership game: many models trained on independent Bernoulli splits
//! of one dataset, audited per target model over its member set plus an
//! equal-size non-member sample.

use thiserror::Error;

use crate::attacks::{
    l_attack_score, lira_l_score, lira_score, logit_confidence, loss_attack,
    prepare_target_context, AttackError, CgSettings, ContextMode, IhaConfig, IhaScorer, LiraMode,
    LiraStatistic, TargetContext, TargetKind,
};
use crate::data::{bernoulli_split, Dataset, MembershipMask};
use crate::eval::{ScoreRow, ScoreTable};
use crate::exec;
use crate::linalg::ConditioningPolicy;
use crate::model::{self, ModelSpec, ParameterVector};
use crate::seeds::{derive, mix64, Stream};
use crate::training::{train, SgdConfig, TrainError};

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("target model index {index} out of range ({models} models)")]
    BadTarget { index: usize, models: usize },
}

/// One trained model in the game.
pub struct GameModel {
    pub index: usize,
    pub mask: MembershipMask,
    pub params: ParameterVector,
}

/// A scored candidate with its ground-truth membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub record_index: usize,
    pub is_member: bool,
}

pub struct MembershipGame {
    pub dataset: Dataset,
    pub spec: ModelSpec,
    pub sgd: SgdConfig,
    pub gamma: f64,
    pub seed: u64,
    pub models: Vec<GameModel>,
}

/// Mask seed and SGD seed of model `index` under `game_seed`. Artifact
/// stores persist models trained elsewhere with exactly these seeds.
pub fn model_seeds(game_seed: u64, index: usize) -> (u64, u64) {
    (
        derive(game_seed, Stream::MembershipMask, index as u64),
        derive(game_seed, Stream::ModelTraining, index as u64),
    )
}

impl MembershipGame {
    /// Train `num_models` models on independent Bernoulli(gamma) splits.
    /// Model `i` gets mask seed and SGD seed derived from `(seed, i)`.
    pub fn train(
        dataset: Dataset,
        spec: ModelSpec,
        sgd: SgdConfig,
        num_models: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self, GameError> {
        let models = exec::try_map_indexed(num_models, |i| {
            let (mask_seed, sgd_seed) = model_seeds(seed, i);
            let mask = bernoulli_split(&dataset, gamma, mask_seed);
            let cfg = SgdConfig {
                seed: sgd_seed,
                ..sgd.clone()
            };
            let params = train(&spec, &dataset, &mask, &cfg)?;
            Ok::<_, TrainError>(GameModel {
                index: i,
                mask,
                params,
            })
        })?;
        Ok(Self {
            dataset,
            spec,
            sgd,
            gamma,
            seed,
            models,
        })
    }

    fn model(&self, target: usize) -> Result<&GameModel, GameError> {
        self.models.get(target).ok_or(GameError::BadTarget {
            index: target,
            models: self.models.len(),
        })
    }

    /// The target's member set plus an equal-size seeded sample of its
    /// non-members.
    pub fn candidates(&self, target: usize) -> Result<Vec<Candidate>, GameError> {
        let model = self.model(target)?;
        let members = model.mask.member_indices();
        let mut non_members = model.mask.non_member_indices();
        let want = members.len().min(non_members.len());
        // seeded partial Fisher-Yates over the non-member pool
        let sample_seed = derive(self.seed, Stream::NonMemberSample, target as u64);
        for i in 0..want {
            let j =
                i + (mix64(sample_seed.wrapping_add(i as u64)) as usize) % (non_members.len() - i);
            non_members.swap(i, j);
        }
        let mut out: Vec<Candidate> = members
            .into_iter()
            .map(|record_index| Candidate {
                record_index,
                is_member: true,
            })
            .collect();
        out.extend(non_members[..want].iter().map(|&record_index| Candidate {
            record_index,
            is_member: false,
        }));
        Ok(out)
    }

    /// Precompute the inverse-Hessian context for one target model.
    pub fn prepare_context(
        &self,
        target: usize,
        mode: ContextMode,
    ) -> Result<TargetContext, GameError> {
        let model = self.model(target)?;
        Ok(prepare_target_context(
            &self.spec,
            &model.params,
            &self.dataset,
            &model.mask,
            mode,
        )?)
    }

    fn table_from_scores(
        &self,
        attack_id: &str,
        target: usize,
        candidates: &[Candidate],
        scores: Vec<f64>,
    ) -> ScoreTable {
        let rows = candidates
            .iter()
            .zip(scores)
            .map(|(c, score)| ScoreRow {
                record_index: c.record_index,
                score,
                is_member: c.is_member,
            })
            .collect();
        ScoreTable::new(attack_id, target, rows)
    }

    /// Negative-loss attack over the candidate set.
    pub fn audit_loss(&self, target: usize) -> Result<ScoreTable, GameError> {
        let model = self.model(target)?;
        let candidates = self.candidates(target)?;
        let scores = exec::try_map_indexed(candidates.len(), |i| {
            loss_attack(
                &self.spec,
                &model.params,
                self.dataset.record(candidates[i].record_index),
            )
        })?;
        Ok(self.table_from_scores("loss", target, &candidates, scores))
    }

    /// Self-influence attack; `ctx` must belong to `target`.
    pub fn audit_sif(
        &self,
        target: usize,
        ctx: &TargetContext,
        policy: ConditioningPolicy,
        cg: &CgSettings,
    ) -> Result<ScoreTable, GameError> {
        let candidates = self.candidates(target)?;
        let scores = exec::try_map_indexed(candidates.len(), |i| {
            crate::attacks::sif_score(
                ctx,
                self.dataset.record(candidates[i].record_index),
                policy,
                cg,
            )
        })?;
        Ok(self.table_from_scores("sif", target, &candidates, scores))
    }

    /// Inverse-Hessian attack; `ctx` must belong to `target`.
    pub fn audit_iha(
        &self,
        target: usize,
        ctx: &TargetContext,
        cfg: IhaConfig,
        attack_id: &str,
    ) -> Result<ScoreTable, GameError> {
        let candidates = self.candidates(target)?;
        let scorer = IhaScorer::new(ctx, cfg)?;
        let scores = exec::try_map_indexed(candidates.len(), |i| {
            let c = candidates[i];
            let kind = if c.is_member {
                TargetKind::Member {
                    index: c.record_index,
                }
            } else {
                TargetKind::NonMember {
                    index: c.record_index,
                }
            };
            scorer.score(self.dataset.record(c.record_index), kind)
        })?;
        Ok(self.table_from_scores(attack_id, target, &candidates, scores))
    }

    /// Per-record statistic of one model, oriented loss-like.
    fn statistic(
        &self,
        model: &GameModel,
        record_index: usize,
        statistic: LiraStatistic,
    ) -> Result<f64, AttackError> {
        let z = self.dataset.record(record_index);
        match statistic {
            LiraStatistic::Loss => Ok(model::loss(&self.spec, &model.params, z)?),
            LiraStatistic::LogitConfidence => logit_confidence(&self.spec, &model.params, z),
        }
    }

    /// Likelihood-ratio attack using the game's other models as references.
    pub fn audit_lira(
        &self,
        target: usize,
        mode: LiraMode,
        statistic: LiraStatistic,
    ) -> Result<ScoreTable, GameError> {
        let model = self.model(target)?;
        let candidates = self.candidates(target)?;
        let scores = exec::try_map_indexed(candidates.len(), |i| {
            let r = candidates[i].record_index;
            let target_stat = self.statistic(model, r, statistic)?;
            let mut in_stats = Vec::new();
            let mut out_stats = Vec::new();
            for reference in &self.models {
                if reference.index == target {
                    continue;
                }
                let stat = self.statistic(reference, r, statistic)?;
                if reference.mask.bits[r] {
                    in_stats.push(stat);
                } else {
                    out_stats.push(stat);
                }
            }
            lira_score(target_stat, &in_stats, &out_stats, mode).map(|o| o.score)
        })?;
        let attack_id = match mode {
            LiraMode::Online => "lira",
            LiraMode::Offline => "lira-offline",
        };
        Ok(self.table_from_scores(attack_id, target, &candidates, scores))
    }

    /// Losses of `refs_per_record` leave-one-out reference models for one
    /// candidate record: each trains on the target's member set minus the
    /// record, with an independent seed.
    pub fn loo_reference_losses(
        &self,
        target: usize,
        record_index: usize,
        refs_per_record: usize,
    ) -> Result<Vec<f64>, GameError> {
        let model = self.model(target)?;
        let loo_mask = model.mask.without(record_index);
        let z = self.dataset.record(record_index);
        let losses = exec::try_map_indexed(refs_per_record, |r| {
            let seed = derive(
                derive(self.seed, Stream::LooReference, target as u64),
                Stream::LooReference,
                (record_index as u64) << 16 | r as u64,
            );
            let cfg = SgdConfig {
                seed,
                ..self.sgd.clone()
            };
            let params = train(&self.spec, &self.dataset, &loo_mask, &cfg)?;
            Ok::<_, TrainError>(model::loss(&self.spec, &params, z).expect("validated record"))
        })?;
        Ok(losses)
    }

    /// Leave-one-out attacks. Both scores come from one shared reference set
    /// per record: the L-attack ranks the target loss in it, LiRA-L fits the
    /// offline Gaussian to it. Candidates beyond `max_candidates` are
    /// dropped class-balanced from the end.
    pub fn audit_leave_one_out(
        &self,
        target: usize,
        refs_per_record: usize,
        max_candidates: usize,
    ) -> Result<(ScoreTable, ScoreTable), GameError> {
        let model = self.model(target)?;
        let all = self.candidates(target)?;
        let candidates = balance_truncate(all, max_candidates);
        let mut l_scores = Vec::with_capacity(candidates.len());
        let mut lira_l_scores = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let refs = self.loo_reference_losses(target, c.record_index, refs_per_record)?;
            let target_loss = model::loss(
                &self.spec,
                &model.params,
                self.dataset.record(c.record_index),
            )
            .map_err(AttackError::Model)?;
            l_scores.push(l_attack_score(target_loss, &refs).map_err(GameError::Attack)?);
            lira_l_scores.push(
                lira_l_score(target_loss, &refs)
                    .map_err(GameError::Attack)?
                    .score,
            );
        }
        Ok((
            self.table_from_scores("l-attack", target, &candidates, l_scores),
            self.table_from_scores("lira-l", target, &candidates, lira_l_scores),
        ))
    }
}

/// Keep at most `max` candidates, preserving the member/non-member balance.
fn balance_truncate(candidates: Vec<Candidate>, max: usize) -> Vec<Candidate> {
    if candidates.len() <= max {
        return candidates;
    }
    let keep_each = (max / 2).max(1);
    let mut members = 0;
    let mut non_members = 0;
    candidates
        .into_iter()
        .filter(|c| {
            if c.is_member {
                members += 1;
                members <= keep_each
            } else {
                non_members += 1;
                non_members <= keep_each
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_tabular;
    use crate::model::LossKind;

    fn tiny_game() -> MembershipGame {
        let dataset = synth_tabular(51, 160, 8, 2, 0.5).unwrap();
        let spec = ModelSpec::mlp(vec![4], LossKind::CrossEntropy, 8, 2);
        let sgd = SgdConfig {
            epochs: 10,
            batch_size: 16,
            seed: 0,
            ..Default::default()
        };
        MembershipGame::train(dataset, spec, sgd, 4, 0.5, 99).unwrap()
    }

    #[test]
    fn game_is_deterministic_and_masks_differ() {
        let a = tiny_game();
        let b = tiny_game();
        for (x, y) in a.models.iter().zip(&b.models) {
            assert_eq!(x.mask, y.mask);
            assert_eq!(x.params, y.params);
        }
        assert_ne!(a.models[0].mask.bits, a.models[1].mask.bits);
    }

    #[test]
    fn candidate_sets_are_balanced_and_disjoint() {
        let g = tiny_game();
        let c = g.candidates(1).unwrap();
        let members = c.iter().filter(|x| x.is_member).count();
        let non_members = c.len() - members;
        assert_eq!(
            members.min(g.models[1].mask.non_member_indices().len()),
            non_members
        );
        // every member candidate really is a member, and vice versa
        for cand in &c {
            assert_eq!(g.models[1].mask.bits[cand.record_index], cand.is_member);
        }
        // no duplicate records
        let mut seen = std::collections::HashSet::new();
        assert!(c.iter().all(|x| seen.insert(x.record_index)));
    }

    #[test]
    fn loss_audit_covers_the_candidate_set() {
        let g = tiny_game();
        let t = g.audit_loss(2).unwrap();
        let c = g.candidates(2).unwrap();
        assert_eq!(t.rows.len(), c.len());
        assert_eq!(t.attack_id, "loss");
    }

    #[test]
    fn lira_with_too_few_references_errors() {
        // 3 models total: a record in both other training sets leaves no
        // out references
        let dataset = synth_tabular(52, 120, 6, 2, 0.5).unwrap();
        let spec = ModelSpec::mlp(vec![3], LossKind::CrossEntropy, 6, 2);
        let sgd = SgdConfig {
            epochs: 4,
            batch_size: 8,
            seed: 0,
            ..Default::default()
        };
        let g = MembershipGame::train(dataset, spec, sgd, 3, 0.5, 7).unwrap();
        // with 2 references per record, online LiRA needs 2 in + 2 out,
        // which can never hold
        let err = g.audit_lira(0, LiraMode::Online, LiraStatistic::Loss);
        assert!(matches!(
            err,
            Err(GameError::Attack(
                AttackError::InsufficientReferences { .. }
            ))
        ));
    }

    #[test]
    fn balance_truncate_keeps_classes_even() {
        let candidates: Vec<Candidate> = (0..20)
            .map(|i| Candidate {
                record_index: i,
                is_member: i % 2 == 0,
            })
            .collect();
        let kept = balance_truncate(candidates, 6);
        assert_eq!(kept.len(), 6);
        assert_eq!(kept.iter().filter(|c| c.is_member).count(), 3);
    }

    #[test]
    fn loo_attacks_share_the_reference_set() {
        let g = tiny_game();
        let (l, lira_l) = g.audit_leave_one_out(0, 3, 4).unwrap();
        assert_eq!(l.rows.len(), 4);
        assert_eq!(lira_l.rows.len(), 4);
        // same candidates in the same order
        for (a, b) in l.rows.iter().zip(&lira_l.rows) {
            assert_eq!(a.record_index, b.record_index);
            assert_eq!(a.is_member, b.is_member);
        }
    }
}
