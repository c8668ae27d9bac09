//! The four training regimes: single (no transfer), joint, self-training on
//! pseudo labels, and pre-training plus fine-tuning. All regimes share one
//! deterministic loop with best-validation-perplexity snapshot selection and
//! train/test curve logging.

mod data;
mod run;

pub use data::{encode_samples, plan_batches, DataAudit, DataRole, EncodedData};
pub use run::{run_training, TestEvalSet};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, DatasetSplit, ReactionSample};
use crate::decode::greedy_decode;
use crate::model::{
    batch_loss, init_params, load_checkpoint, ModelConfig, ModelError, ParameterSet, SamplePair,
    Vocabulary,
};
use crate::optim::{AdamParams, OptimError, Schedule, ScheduleKind};
use crate::smiles::{CanonicalSmiles, SmilesError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("data leak: {count} augment training products collide with the target corpus")]
    LeakDetected { count: usize },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Single,
    Joint,
    SelfTrain,
    Pretrain,
    Finetune,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::Joint => "joint",
            Strategy::SelfTrain => "self",
            Strategy::Pretrain => "pretrain",
            Strategy::Finetune => "finetune",
        }
    }
}

/// Schedule constants that depend on the iteration budget. Warm-up and cycle
/// default to 2% and 10% of the planned iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: Option<u64>,
    pub cycle_period: Option<u64>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            peak_lr: 1e-3,
            min_lr: 1e-5,
            warmup_steps: None,
            cycle_period: None,
        }
    }
}

impl ScheduleSpec {
    pub fn resolve(&self, kind: ScheduleKind, total_iters: u64) -> Result<Schedule, OptimError> {
        let warmup = self
            .warmup_steps
            .unwrap_or_else(|| (total_iters / 50).max(1));
        match kind {
            ScheduleKind::Cyclic => {
                let period = self.cycle_period.unwrap_or_else(|| (total_iters / 10).max(2));
                Schedule::cyclic(warmup, self.peak_lr, self.min_lr, period)
            }
            ScheduleKind::InverseSqrt => Schedule::inverse_sqrt(warmup, self.peak_lr),
        }
    }
}

/// Everything a training run needs beyond its datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub strategy: Strategy,
    pub model: ModelConfig,
    pub total_iters: u64,
    /// Token budget per batch, counting source and target tokens.
    pub batch_tokens: usize,
    pub val_interval: u64,
    /// When set, every this-many iterations the test set is decoded with a
    /// beam and 1-best/20-best accuracy land in the curves file. Expensive.
    pub test_eval_interval: Option<u64>,
    pub test_eval_beam: usize,
    pub seed: u64,
    pub adam: AdamParams,
    pub clip_norm: Option<f64>,
    pub schedule: ScheduleSpec,
    pub out_dir: PathBuf,
    /// Pre-trained checkpoint; required by (and only by) fine-tuning.
    pub init_checkpoint: Option<PathBuf>,
}

impl TrainRunConfig {
    pub fn new(strategy: Strategy, out_dir: &Path) -> Self {
        TrainRunConfig {
            strategy,
            model: ModelConfig::desk_scale(4),
            total_iters: 1000,
            batch_tokens: 1024,
            val_interval: 100,
            test_eval_interval: None,
            test_eval_beam: 20,
            seed: 1,
            adam: AdamParams::default(),
            clip_norm: Some(5.0),
            schedule: ScheduleSpec::default(),
            out_dir: out_dir.to_path_buf(),
            init_checkpoint: None,
        }
    }

    fn validate(&self, expected: Strategy) -> Result<(), TrainError> {
        if self.strategy != expected {
            return Err(TrainError::Config(format!(
                "run configured for {} handed to {}",
                self.strategy.name(),
                expected.name()
            )));
        }
        if self.val_interval < 1 {
            return Err(TrainError::Config("val_interval must be >= 1".into()));
        }
        if self.total_iters < 1 {
            return Err(TrainError::Config("total_iters must be >= 1".into()));
        }
        if self.batch_tokens < 4 {
            return Err(TrainError::Config("batch_tokens too small".into()));
        }
        if expected == Strategy::Finetune && self.init_checkpoint.is_none() {
            return Err(TrainError::Config(
                "finetune requires init_checkpoint".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub iteration: u64,
    pub val_perplexity: f64,
    /// Only snapshots that improved the best are kept on disk.
    pub checkpoint: Option<PathBuf>,
}

/// Validation history. The best entry minimizes perplexity; ties go to the
/// earliest iteration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotLedger {
    pub entries: Vec<LedgerEntry>,
}

impl SnapshotLedger {
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            match best {
                None => best = Some(i),
                Some(b) if e.val_perplexity < self.entries[b].val_perplexity => best = Some(i),
                _ => {}
            }
        }
        best
    }

    pub fn best(&self) -> Option<&LedgerEntry> {
        self.best_index().map(|i| &self.entries[i])
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:>10} {:>14} {}\n", "iteration", "val_ppl", "checkpoint");
        for e in &self.entries {
            out.push_str(&format!(
                "{:>10} {:>14.6} {}\n",
                e.iteration,
                e.val_perplexity,
                e.checkpoint
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "-".to_string())
            ));
        }
        if let Some(b) = self.best() {
            out.push_str(&format!("best: iteration {}\n", b.iteration));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: u64,
    pub train_ppl: f64,
    pub lr: f64,
    pub acc1: Option<f64>,
    pub acc20: Option<f64>,
}

/// Per-validation training curves, CSV-serializable with header
/// `iter,train_ppl,lr[,acc1,acc20]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CurveLog {
    pub rows: Vec<CurveRow>,
    pub with_test_eval: bool,
}

impl CurveLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.with_test_eval {
            "iter,train_ppl,lr,acc1,acc20\n"
        } else {
            "iter,train_ppl,lr\n"
        });
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.8e}", r.iteration, r.train_ppl, r.lr));
            if self.with_test_eval {
                match (r.acc1, r.acc20) {
                    (Some(a1), Some(a20)) => out.push_str(&format!(",{a1:.6},{a20:.6}")),
                    _ => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty curves file")?;
        let with_test_eval = match header {
            "iter,train_ppl,lr" => false,
            "iter,train_ppl,lr,acc1,acc20" => true,
            other => return Err(format!("unrecognized curves header {other:?}")),
        };
        let mut rows = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let want = if with_test_eval { 5 } else { 3 };
            if cols.len() != want {
                return Err(format!("line {}: expected {want} columns", no + 2));
            }
            let parse_f = |s: &str| -> Result<f64, String> {
                s.parse().map_err(|_| format!("line {}: bad number {s:?}", no + 2))
            };
            let opt = |s: &str| -> Result<Option<f64>, String> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s).map(Some)
                }
            };
            rows.push(CurveRow {
                iteration: cols[0]
                    .parse()
                    .map_err(|_| format!("line {}: bad iteration", no + 2))?,
                train_ppl: parse_f(cols[1])?,
                lr: parse_f(cols[2])?,
                acc1: if with_test_eval { opt(cols[3])? } else { None },
                acc20: if with_test_eval { opt(cols[4])? } else { None },
            });
        }
        Ok(CurveLog {
            rows,
            with_test_eval,
        })
    }

    pub fn iterations_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].iteration < w[1].iteration)
    }
}

/// What a finished run hands back.
pub struct TrainOutcome {
    pub strategy: Strategy,
    /// Parameters before the first update; for fine-tuning these are the
    /// loaded checkpoint tensors, bit-exact.
    pub initial_params: ParameterSet,
    pub best_params: ParameterSet,
    pub best_iteration: u64,
    pub best_val_perplexity: f64,
    pub model: ModelConfig,
    pub vocab: Vocabulary,
    pub ledger: SnapshotLedger,
    pub curves: CurveLog,
    pub audit: DataAudit,
    pub best_checkpoint: PathBuf,
}

/// exp(token-weighted mean NLL) on a validation set, evaluation mode.
pub fn validate_perplexity(
    params: &ParameterSet,
    cfg: &ModelConfig,
    samples: &[SamplePair],
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset("validation set"));
    }
    Ok(batch_loss(params, cfg, samples)?.perplexity())
}

#[derive(Debug, Clone, Default)]
pub struct PseudoReport {
    pub total: usize,
    /// Indices of samples whose decode hit the length limit.
    pub truncated: Vec<usize>,
}

/// Relabel augment products with a trained model's greedy decodes
/// (beam width 1). Output pairs each input product with the decoded
/// reactant text verbatim; undecodable or invalid SMILES stay as text.
pub fn pseudo_label(
    params: &ParameterSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    products: &[CanonicalSmiles],
) -> Result<(Vec<ReactionSample>, PseudoReport), TrainError> {
    use rayon::prelude::*;
    let max_len = cfg.max_seq_len - 1;
    let decoded: Vec<Result<(String, bool), TrainError>> = products
        .par_iter()
        .map(|product| {
            let src = vocab
                .encode_text(product.as_str())
                .map_err(TrainError::Smiles)?;
            let (tokens, truncated) = greedy_decode(params, cfg, &src, max_len)?;
            Ok((vocab.decode_text(&tokens), truncated))
        })
        .collect();

    let mut samples = Vec::with_capacity(products.len());
    let mut report = PseudoReport {
        total: products.len(),
        truncated: Vec::new(),
    };
    for (i, res) in decoded.into_iter().enumerate() {
        let (text, truncated) = res?;
        if truncated {
            report.truncated.push(i);
        }
        samples.push(ReactionSample::pseudo(products[i].clone(), text));
    }
    Ok((samples, report))
}

// ---------------------------------------------------------------------------
// Strategy entry points
// ---------------------------------------------------------------------------

fn vocab_from_samples<'a>(
    sets: impl IntoIterator<Item = &'a [ReactionSample]>,
) -> Result<Vocabulary, SmilesError> {
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for set in sets {
        for s in set {
            pairs.push((s.product.as_str(), s.reactants.as_str()));
        }
    }
    Vocabulary::from_text_pairs(pairs)
}

/// Maximum-likelihood training on the target training set alone, scheduled
/// by target validation perplexity.
pub fn train_single(
    run: &TrainRunConfig,
    target: &DatasetSplit,
) -> Result<TrainOutcome, TrainError> {
    run.validate(Strategy::Single)?;
    let vocab = vocab_from_samples([target.train.as_slice()])?;
    let mut cfg = run.model.clone();
    cfg.vocab_size = vocab.size();
    let params = init_params(&cfg, run.seed)?;
    let train = data::tag_samples(DataRole::Target, &target.train);
    run_training(
        run,
        ScheduleKind::Cyclic,
        params,
        cfg,
        vocab,
        train,
        (DataRole::Target, &target.val),
        TestEvalSet::from_split(DataRole::Target, &target.test, run),
    )
}

/// Joint training on the concatenated target and cleansed augment training
/// sets; validation stays on the target split. The cleanse is re-checked and
/// the run aborts on any product collision.
pub fn train_joint(
    run: &TrainRunConfig,
    target: &DatasetSplit,
    augment_train: &[ReactionSample],
) -> Result<TrainOutcome, TrainError> {
    run.validate(Strategy::Joint)?;
    check_leak_free(augment_train, target)?;
    let vocab = vocab_from_samples([target.train.as_slice(), augment_train])?;
    let mut cfg = run.model.clone();
    cfg.vocab_size = vocab.size();
    let params = init_params(&cfg, run.seed)?;
    let mut train = data::tag_samples(DataRole::Target, &target.train);
    train.extend(data::tag_samples(DataRole::Augment, augment_train));
    run_training(
        run,
        ScheduleKind::Cyclic,
        params,
        cfg,
        vocab,
        train,
        (DataRole::Target, &target.val),
        TestEvalSet::from_split(DataRole::Target, &target.test, run),
    )
}

/// Joint-style training on the target training set united with
/// pseudo-labeled augment data.
pub fn train_self(
    run: &TrainRunConfig,
    target: &DatasetSplit,
    pseudo_augment: &[ReactionSample],
) -> Result<TrainOutcome, TrainError> {
    run.validate(Strategy::SelfTrain)?;
    check_leak_free(pseudo_augment, target)?;
    let vocab = vocab_from_samples([target.train.as_slice(), pseudo_augment])?;
    let mut cfg = run.model.clone();
    cfg.vocab_size = vocab.size();
    let params = init_params(&cfg, run.seed)?;
    let mut train = data::tag_samples(DataRole::Target, &target.train);
    train.extend(data::tag_samples(DataRole::Pseudo, pseudo_augment));
    run_training(
        run,
        ScheduleKind::Cyclic,
        params,
        cfg,
        vocab,
        train,
        (DataRole::Target, &target.val),
        TestEvalSet::from_split(DataRole::Target, &target.test, run),
    )
}

/// Single-model training solely on the augment corpus: scheduled by augment
/// validation, evaluated on augment test. Target data is never read.
pub fn pretrain(run: &TrainRunConfig, augment: &DatasetSplit) -> Result<TrainOutcome, TrainError> {
    run.validate(Strategy::Pretrain)?;
    let vocab = vocab_from_samples([augment.train.as_slice()])?;
    let mut cfg = run.model.clone();
    cfg.vocab_size = vocab.size();
    let params = init_params(&cfg, run.seed)?;
    let train = data::tag_samples(DataRole::Augment, &augment.train);
    run_training(
        run,
        ScheduleKind::Cyclic,
        params,
        cfg,
        vocab,
        train,
        (DataRole::Augment, &augment.val),
        TestEvalSet::from_split(DataRole::Augment, &augment.test, run),
    )
}

/// Continue from a pre-trained checkpoint on the target corpus under the
/// non-cyclic inverse-sqrt schedule, with fresh optimizer moments. Initial
/// parameters are the checkpoint tensors, bit-exact.
pub fn finetune(run: &TrainRunConfig, target: &DatasetSplit) -> Result<TrainOutcome, TrainError> {
    run.validate(Strategy::Finetune)?;
    let ckpt_path = run.init_checkpoint.as_ref().expect("validated");
    let (params, ckpt_cfg, vocab) = load_checkpoint(ckpt_path)?;

    // The architecture must be identical; training-only knobs follow the run.
    let mut cfg = ckpt_cfg.clone();
    cfg.dropout_rate = run.model.dropout_rate;
    cfg.label_smoothing = run.model.label_smoothing;
    let arch_matches = ckpt_cfg.num_layers == run.model.num_layers
        && ckpt_cfg.model_dim == run.model.model_dim
        && ckpt_cfg.num_heads == run.model.num_heads
        && ckpt_cfg.ffn_dim == run.model.ffn_dim
        && ckpt_cfg.max_seq_len == run.model.max_seq_len
        && ckpt_cfg.layernorm_eps == run.model.layernorm_eps;
    if !arch_matches {
        return Err(TrainError::Model(ModelError::VersionMismatch(format!(
            "checkpoint architecture {ckpt_cfg:?} differs from run architecture"
        ))));
    }

    let train = data::tag_samples(DataRole::Target, &target.train);
    run_training(
        run,
        ScheduleKind::InverseSqrt,
        params,
        cfg,
        vocab,
        train,
        (DataRole::Target, &target.val),
        TestEvalSet::from_split(DataRole::Target, &target.test, run),
    )
}

fn check_leak_free(
    augment_train: &[ReactionSample],
    target: &DatasetSplit,
) -> Result<(), TrainError> {
    use std::collections::HashSet;
    let target_products: HashSet<&str> = target.all_products().map(|p| p.as_str()).collect();
    let count = augment_train
        .iter()
        .filter(|s| target_products.contains(s.product.as_str()))
        .count();
    if count > 0 {
        return Err(TrainError::LeakDetected { count });
    }
    Ok(())
}
