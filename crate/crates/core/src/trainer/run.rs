//! The shared training loop: token-budget batches, Adam under a schedule,
//! periodic validation with best-snapshot selection, curve logging.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::data::{encode_samples, plan_batches, tag_samples, DataAudit, DataRole};
use super::{
    CurveLog, CurveRow, LedgerEntry, SnapshotLedger, TrainError, TrainOutcome, TrainRunConfig,
};
use crate::dataset::ReactionSample;
use crate::decode::{beam_search, match_rank};
use crate::fsutil::write_atomic;
use crate::model::{
    batch_loss, loss_and_grad, save_checkpoint, DropoutPlan, ModelConfig, ParameterSet,
    SamplePair, Vocabulary,
};
use crate::optim::{adam_step, clip_global_norm, AdamState, ScheduleKind};
use crate::util::seed_rng;

/// Test samples for the expensive in-training accuracy curves.
pub struct TestEvalSet {
    pub role: DataRole,
    pub samples: Vec<ReactionSample>,
}

impl TestEvalSet {
    /// Present only when the run enables test evaluation.
    pub fn from_split(
        role: DataRole,
        samples: &[ReactionSample],
        run: &TrainRunConfig,
    ) -> Option<Self> {
        run.test_eval_interval.map(|_| TestEvalSet {
            role,
            samples: samples.to_vec(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_training(
    run: &TrainRunConfig,
    kind: ScheduleKind,
    mut params: ParameterSet,
    cfg: ModelConfig,
    vocab: Vocabulary,
    train_tagged: Vec<(DataRole, ReactionSample)>,
    val: (DataRole, &[ReactionSample]),
    test: Option<TestEvalSet>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_tagged.is_empty() {
        return Err(TrainError::EmptyDataset("training set"));
    }
    let (val_role, val_samples) = val;
    if val_samples.is_empty() {
        return Err(TrainError::EmptyDataset("validation set"));
    }

    let encoded = encode_samples(&train_tagged, &vocab, cfg.max_seq_len)?;
    if encoded.pairs.is_empty() {
        return Err(TrainError::EmptyDataset(
            "training set (all samples exceed max_seq_len)",
        ));
    }
    let val_tagged = tag_samples(val_role, val_samples);
    let val_encoded = encode_samples(&val_tagged, &vocab, cfg.max_seq_len)?;
    if val_encoded.pairs.is_empty() {
        return Err(TrainError::EmptyDataset(
            "validation set (all samples exceed max_seq_len)",
        ));
    }
    let val_pairs: Vec<SamplePair> = val_encoded.pairs.into_iter().map(|(_, p)| p).collect();

    // Decode-ready test inputs, only when curves want accuracy columns.
    let test_eval: Option<(DataRole, Vec<(Vec<usize>, ReactionSample)>)> = match &test {
        Some(t) if run.test_eval_interval.is_some() => {
            let mut items = Vec::with_capacity(t.samples.len());
            for s in &t.samples {
                let src = vocab.encode_text(s.product.as_str())?;
                if src.len() <= cfg.max_seq_len {
                    items.push((src, s.clone()));
                }
            }
            Some((t.role, items))
        }
        _ => None,
    };

    let schedule = run.schedule.resolve(kind, run.total_iters)?;
    let initial_params = params.clone();
    let batches = plan_batches(&encoded.pairs, run.batch_tokens);
    let mut adam = AdamState::new(&params, run.adam);
    let mut audit = DataAudit::default();
    let mut ledger = SnapshotLedger::default();
    let mut curves = CurveLog {
        rows: Vec::new(),
        with_test_eval: test_eval.is_some(),
    };

    let mut best: Option<(f64, u64, ParameterSet, PathBuf)> = None;
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut loss_sum = 0.0f64;
    let mut token_sum = 0usize;

    for iter in 1..=run.total_iters {
        let pos = ((iter - 1) % batches.len() as u64) as usize;
        if pos == 0 {
            let epoch = (iter - 1) / batches.len() as u64;
            order = (0..batches.len()).collect();
            order.shuffle(&mut seed_rng(run.seed, &format!("batch-order.{epoch}")));
        }
        let batch_ids = &batches[order[pos]];
        let batch: Vec<SamplePair> = batch_ids
            .iter()
            .map(|&i| encoded.pairs[i].1.clone())
            .collect();
        for &i in batch_ids {
            audit.record(encoded.pairs[i].0, "train", 1);
        }

        let lr = schedule.lr_at(iter - 1);
        let plan = (cfg.dropout_rate > 0.0).then(|| DropoutPlan {
            rate: cfg.dropout_rate,
            seed: run.seed ^ iter.wrapping_mul(0x2545F4914F6CDD1D),
        });
        let (loss, mut grads) = loss_and_grad(&params, &cfg, &batch, plan.as_ref())?;
        // Adam consumes token-mean gradients so the clip threshold and
        // learning rate are batch-size independent.
        grads.scale(1.0 / loss.token_count as f64);
        if let Some(max_norm) = run.clip_norm {
            clip_global_norm(&mut grads, max_norm);
        }
        adam_step(&mut params, &grads, &mut adam, lr)?;
        loss_sum += loss.total;
        token_sum += loss.token_count;

        if iter % run.val_interval == 0 || iter == run.total_iters {
            audit.record(val_role, "val", val_pairs.len() as u64);
            let ppl = batch_loss(&params, &cfg, &val_pairs)?.perplexity();

            // Strictly-better keeps the earliest iteration on ties.
            let improved = best.as_ref().map_or(true, |(b, _, _, _)| ppl < *b);
            let mut checkpoint = None;
            if improved {
                let path = run.out_dir.join(format!("best_iter{iter}.ckpt"));
                save_checkpoint(&params, &cfg, &vocab, &path)?;
                if let Some((_, _, _, old)) = &best {
                    let _ = std::fs::remove_file(old);
                }
                checkpoint = Some(path.clone());
                best = Some((ppl, iter, params.clone(), path));
            }
            ledger.entries.push(LedgerEntry {
                iteration: iter,
                val_perplexity: ppl,
                checkpoint,
            });

            let (acc1, acc20) = match &test_eval {
                Some((role, items))
                    if run
                        .test_eval_interval
                        .is_some_and(|e| iter % e == 0 || iter == run.total_iters) =>
                {
                    audit.record(*role, "test", items.len() as u64);
                    let (a1, a20) =
                        test_accuracy(&params, &cfg, &vocab, items, run.test_eval_beam)?;
                    (Some(a1), Some(a20))
                }
                _ => (None, None),
            };
            curves.rows.push(CurveRow {
                iteration: iter,
                train_ppl: (loss_sum / token_sum as f64).exp(),
                lr,
                acc1,
                acc20,
            });
            loss_sum = 0.0;
            token_sum = 0;
        }
    }

    let (best_ppl, best_iteration, best_params, _best_file) =
        best.expect("at least one validation");
    // Stable alias for downstream steps; the iteration-named file stays too.
    let best_checkpoint = run.out_dir.join("best.ckpt");
    save_checkpoint(&best_params, &cfg, &vocab, &best_checkpoint)?;

    write_atomic(&run.out_dir.join("curves.csv"), curves.to_csv().as_bytes())?;
    write_atomic(&run.out_dir.join("ledger.txt"), ledger.to_text().as_bytes())?;
    let ledger_json = serde_json::json!({
        "entries": ledger.entries,
        "best_index": ledger.best_index(),
        "dropped_too_long": encoded.dropped_too_long,
        "audit": audit,
    });
    write_atomic(
        &run.out_dir.join("ledger.json"),
        serde_json::to_string_pretty(&ledger_json)
            .expect("ledger serialization")
            .as_bytes(),
    )?;
    write_atomic(
        &run.out_dir.join("run_config.json"),
        serde_json::to_string_pretty(run)
            .expect("config serialization")
            .as_bytes(),
    )?;

    Ok(TrainOutcome {
        strategy: run.strategy,
        initial_params,
        best_params,
        best_iteration,
        best_val_perplexity: best_ppl,
        model: cfg,
        vocab,
        ledger,
        curves,
        audit,
        best_checkpoint,
    })
}

/// 1-best and k-best accuracy of beam decodes over the test inputs.
fn test_accuracy(
    params: &ParameterSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    items: &[(Vec<usize>, ReactionSample)],
    k: usize,
) -> Result<(f64, f64), TrainError> {
    let max_len = cfg.max_seq_len - 1;
    let ranks: Vec<Result<Option<usize>, TrainError>> = items
        .par_iter()
        .map(|(src, gold)| {
            let beam = beam_search(params, cfg, vocab, src, k, max_len)?;
            Ok(match_rank(&beam, gold))
        })
        .collect();
    let mut hit1 = 0usize;
    let mut hitk = 0usize;
    for r in &ranks {
        match r {
            Ok(Some(1)) => {
                hit1 += 1;
                hitk += 1;
            }
            Ok(Some(r)) if r <= &k => hitk += 1,
            Ok(_) => {}
            Err(e) => return Err(TrainError::Config(format!("test eval failed: {e}"))),
        }
    }
    let n = items.len().max(1) as f64;
    Ok((hit1 as f64 / n, hitk as f64 / n))
}
