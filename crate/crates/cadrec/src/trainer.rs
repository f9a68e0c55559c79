//! Mini-batch training over users with deterministic parallelism: per-user
//! gradients run on the rayon pool, are collected in batch order, and are
//! merged by a single reducer, so results are identical for any thread
//! count. Validation drives best-checkpoint tracking and early stopping.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cadrec_core::encoders::{init_params, HyperParams, ModelParams};
use cadrec_core::evaluation::{
    ndcg_at_k, rank_items, recall_at_k, MacroAccumulator, MacroMetrics, UserEval,
};
use cadrec_core::hgc::encode_user;
use cadrec_core::hypergraph::HyperGraph;
use cadrec_core::interactions::{item_popularity, SplitDataset};
use cadrec_core::objective::{
    score_all_test, user_loss_and_grad, BatchGrads, OptState, OptimizerKind, PopEncodings,
    RegForm, UserExample,
};
use cadrec_core::math;

use crate::{AppError, AppResult};

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub reg_form: RegForm,
    /// K used for the per-epoch validation metrics.
    pub val_k: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: 64,
            epochs: 30,
            patience: 10,
            seed: 42,
            optimizer: OptimizerKind::Sgd,
            reg_form: RegForm::Squared,
            val_k: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall: f64,
    pub val_ndcg: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (final epoch if validation
    /// never scored anyone).
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_ndcg: f64,
}

/// Which held-out sequence to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Val,
    Test,
}

pub fn train(
    split: &SplitDataset,
    graph: &HyperGraph,
    hp: HyperParams,
    settings: &TrainSettings,
) -> AppResult<TrainOutcome> {
    hp.validate()?;
    if settings.batch_size == 0 || settings.epochs == 0 {
        return Err(AppError::config("batch_size and epochs must be positive"));
    }
    let mut params = init_params(split.num_users(), split.num_items, hp, settings.seed)?;
    let pop = item_popularity(split);
    let pop_enc = PopEncodings::build(&pop, params.hp.d_m);
    let mut opt = OptState::new(settings.optimizer.clone(), &params);

    let trained: Vec<usize> = (0..split.num_users())
        .filter(|&u| split.users[u].is_trained() && !split.users[u].ia_items.is_empty())
        .collect();
    if trained.is_empty() {
        return Err(AppError::data("no trainable users after splitting".to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stall = 0usize;

    for epoch in 0..settings.epochs {
        let started = Instant::now();
        let mut order = trained.clone();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(settings.batch_size) {
            let results: Vec<AppResult<_>> = batch
                .par_iter()
                .map(|&u| {
                    let us = &split.users[u];
                    let slice = graph.slice(&us.ia_items)?;
                    let ex = UserExample {
                        user: u,
                        ia: &us.ia_items,
                        fia: &us.fia_items,
                        slice: &slice.sub_adjacency,
                    };
                    Ok(user_loss_and_grad(&params, &ex, Some(&pop_enc))?)
                })
                .collect();

            let mut grads = BatchGrads::zeros(&params.hp);
            for (&u, result) in batch.iter().zip(results) {
                grads.absorb(&split.users[u].ia_items, result?);
            }
            let mut reg = 0.0;
            for (&item, &count) in &grads.ia_counts {
                let row = params.item_embeddings.row(item as usize);
                let per_user = match settings.reg_form {
                    RegForm::Squared => math::dot(row, row),
                    RegForm::Norm => math::norm2(row),
                };
                reg += count as f64 * params.hp.beta2 * per_user;
            }
            epoch_loss += grads.data_loss + reg;
            cadrec_core::objective::update_step(&mut params, &grads, &mut opt)?;
        }

        let val = evaluate_split(&params, graph, split, EvalSplit::Val, &[settings.val_k])?;
        let metrics = val[&settings.val_k];
        let seconds = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: loss {epoch_loss:.6} val_R@{k} {:.6} val_N@{k} {:.6} {seconds:.2}s",
            metrics.recall,
            metrics.ndcg,
            k = settings.val_k,
        );
        history.push(EpochStats {
            epoch,
            loss: epoch_loss,
            val_recall: metrics.recall,
            val_ndcg: metrics.ndcg,
            seconds,
        });

        if metrics.users > 0 {
            let improved = best.as_ref().map_or(true, |(_, b, _)| metrics.ndcg > *b);
            if improved {
                best = Some((epoch, metrics.ndcg, params.clone()));
                stall = 0;
            } else {
                stall += 1;
                if settings.patience > 0 && stall >= settings.patience {
                    log::info!("stopping early after {} stalled epochs", stall);
                    break;
                }
            }
        }
    }

    let (best_epoch, best_ndcg, best_params) = match best {
        Some((e, n, p)) => (e, n, p),
        None => (history.len().saturating_sub(1), 0.0, params),
    };
    Ok(TrainOutcome { params: best_params, history, best_epoch, best_ndcg })
}

/// Macro metrics at each requested K over one held-out split. Users are
/// scored in parallel and reduced in user order.
pub fn evaluate_split(
    params: &ModelParams,
    graph: &HyperGraph,
    split: &SplitDataset,
    which: EvalSplit,
    ks: &[usize],
) -> AppResult<BTreeMap<usize, MacroMetrics>> {
    if ks.is_empty() {
        return Err(AppError::config("eval_ks must not be empty"));
    }
    let k_max = *ks.iter().max().unwrap();

    let per_user: Vec<AppResult<Option<Vec<UserEval>>>> = (0..split.num_users())
        .into_par_iter()
        .map(|u| {
            let us = &split.users[u];
            let target = match which {
                EvalSplit::Val => &us.val_seq,
                EvalSplit::Test => &us.test_seq,
            };
            if !us.is_trained() || us.ia_items.is_empty() || target.is_empty() {
                return Ok(None);
            }
            let train_distinct: Vec<u32> = {
                let set: std::collections::BTreeSet<u32> =
                    us.train_seq.iter().copied().collect();
                set.into_iter().collect()
            };
            let relevant: std::collections::BTreeSet<u32> = target
                .iter()
                .copied()
                .filter(|i| !train_distinct.contains(i))
                .collect();
            if relevant.is_empty() {
                return Ok(None);
            }
            let phi = encode_user(params, graph, u, &us.ia_items)?;
            let scores = score_all_test(params, &phi);
            let topk = rank_items(&scores, &train_distinct, k_max)?;
            let evals = ks
                .iter()
                .map(|&k| UserEval {
                    recall: recall_at_k(&topk[..k], &relevant),
                    ndcg: ndcg_at_k(&topk[..k], &relevant, k),
                })
                .collect();
            Ok(Some(evals))
        })
        .collect();

    let mut accs: Vec<MacroAccumulator> = vec![MacroAccumulator::default(); ks.len()];
    for result in per_user {
        match result? {
            Some(evals) => {
                for (acc, e) in accs.iter_mut().zip(evals) {
                    acc.add(Some(e));
                }
            }
            None => {
                for acc in accs.iter_mut() {
                    acc.add(None);
                }
            }
        }
    }
    Ok(ks.iter().copied().zip(accs.iter().map(|a| a.finish())).collect())
}

/// Mean test-mode score per item over every trainable user, reduced in user
/// order so the output is reproducible.
pub fn mean_item_scores(
    params: &ModelParams,
    graph: &HyperGraph,
    split: &SplitDataset,
) -> AppResult<Vec<f64>> {
    let users: Vec<usize> = (0..split.num_users())
        .filter(|&u| split.users[u].is_trained() && !split.users[u].ia_items.is_empty())
        .collect();
    if users.is_empty() {
        return Err(AppError::data("no trainable users to score".to_string()));
    }
    let per_user: Vec<AppResult<Vec<f64>>> = users
        .par_iter()
        .map(|&u| {
            let phi = encode_user(params, graph, u, &split.users[u].ia_items)?;
            Ok(score_all_test(params, &phi))
        })
        .collect();
    let mut mean = vec![0.0; split.num_items];
    let mut count = 0usize;
    for scores in per_user {
        let scores = scores?;
        for (m, s) in mean.iter_mut().zip(&scores) {
            *m += s;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}
