//! One-shot strategy comparison on the synthetic corpora:
//! synth -> cleanse -> single -> joint -> pseudo-label -> self ->
//! pretrain -> finetune -> n-best evaluation -> comparison table.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    cleanse_overlap, format_reactions, synth_generate, CleanseReport, DatasetError, DatasetSplit,
    ReactionSample, SynthConfig,
};
use crate::decode::{
    beam_search, classwise_report, nbest_accuracy, report::format_predictions, AccuracyTable,
    BeamResult, ClasswiseReport, EvalError,
};
use crate::fsutil::write_atomic;
use crate::model::{ModelConfig, ModelError, ParameterSet, Vocabulary};
use crate::optim::AdamParams;
use crate::trainer::{
    finetune, pretrain, pseudo_label, train_joint, train_self, train_single, ScheduleSpec,
    Strategy, TrainError, TrainOutcome, TrainRunConfig,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Full description of a replay; every knob the run depends on lives here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub synth: SynthConfig,
    pub train_seeds: Vec<u64>,
    pub model: ModelConfig,
    pub batch_tokens: usize,
    pub val_interval: u64,
    pub iters_single: u64,
    pub iters_joint: u64,
    pub iters_self: u64,
    pub iters_pretrain: u64,
    pub iters_finetune: u64,
    pub schedule: ScheduleSpec,
    pub finetune_schedule: ScheduleSpec,
    pub adam: AdamParams,
    pub clip_norm: Option<f64>,
    pub eval_beam: usize,
    pub eval_ns: Vec<usize>,
    /// When set, runs emit in-training test accuracy curves (expensive).
    pub test_eval_interval: Option<u64>,
    pub out_dir: PathBuf,
}

impl ReplayConfig {
    /// The default desk-scale comparison: 2k/250/250 target, 20k/1k/1k
    /// augment, three training seeds, beam-50 n-best evaluation.
    pub fn toy(out_dir: &Path) -> Self {
        ReplayConfig {
            synth: SynthConfig::default(),
            train_seeds: vec![1, 2, 3],
            model: ModelConfig::desk_scale(4),
            batch_tokens: 1024,
            val_interval: 100,
            iters_single: 1200,
            iters_joint: 2200,
            iters_self: 2200,
            iters_pretrain: 2200,
            iters_finetune: 600,
            schedule: ScheduleSpec::default(),
            finetune_schedule: ScheduleSpec {
                peak_lr: 3e-4,
                min_lr: 0.0,
                warmup_steps: Some(20),
                cycle_period: None,
            },
            adam: AdamParams::default(),
            clip_norm: Some(5.0),
            eval_beam: 50,
            eval_ns: vec![1, 3, 5, 10, 20, 50],
            test_eval_interval: None,
            out_dir: out_dir.to_path_buf(),
        }
    }
}

/// Mean and sample standard deviation per n for one strategy.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyScores {
    pub strategy: String,
    pub per_seed: Vec<AccuracyTable>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub ns: Vec<usize>,
    pub rows: Vec<StrategyScores>,
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24}", "strategy"));
        for n in &self.ns {
            out.push_str(&format!(" {:>16}", format!("n={n}")));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<24}", row.strategy));
            for (m, s) in row.mean.iter().zip(&row.std) {
                out.push_str(&format!(" {:>16}", format!("{:.3} ±{:.3}", m, s)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,n,mean,std\n");
        for row in &self.rows {
            for ((n, m), s) in self.ns.iter().zip(&row.mean).zip(&row.std) {
                out.push_str(&format!("{},{},{:.6},{:.6}\n", row.strategy, n, m, s));
            }
        }
        out
    }

    pub fn row(&self, strategy: &str) -> Option<&StrategyScores> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}

pub struct ReplayOutput {
    pub table: ComparisonTable,
    pub cleanse_report: CleanseReport,
    pub classwise: Vec<(String, ClasswiseReport)>,
    pub out_dir: PathBuf,
}

/// Decode a test set with a beam and pair each result with its gold sample.
pub fn decode_test_set(
    params: &ParameterSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    test: &[ReactionSample],
    k: usize,
) -> Result<Vec<(BeamResult, ReactionSample)>, PipelineError> {
    let max_len = cfg.max_seq_len - 1;
    let decoded: Vec<Result<(BeamResult, ReactionSample), PipelineError>> = test
        .par_iter()
        .map(|gold| {
            let src = vocab
                .encode_text(gold.product.as_str())
                .map_err(|e| PipelineError::Dataset(DatasetError::Smiles(e)))?;
            let beam = beam_search(params, cfg, vocab, &src, k, max_len)?;
            Ok((beam, gold.clone()))
        })
        .collect();
    decoded.into_iter().collect()
}

fn run_config(
    cfg: &ReplayConfig,
    strategy: Strategy,
    seed: u64,
    iters: u64,
    out_dir: PathBuf,
) -> TrainRunConfig {
    TrainRunConfig {
        strategy,
        model: cfg.model.clone(),
        total_iters: iters,
        batch_tokens: cfg.batch_tokens,
        val_interval: cfg.val_interval,
        test_eval_interval: cfg.test_eval_interval,
        test_eval_beam: 20,
        seed,
        adam: cfg.adam,
        clip_norm: cfg.clip_norm,
        schedule: if strategy == Strategy::Finetune {
            cfg.finetune_schedule
        } else {
            cfg.schedule
        },
        out_dir,
        init_checkpoint: None,
    }
}

fn evaluate(
    cfg: &ReplayConfig,
    outcome: &TrainOutcome,
    test: &[ReactionSample],
    dir: &Path,
) -> Result<AccuracyTable, PipelineError> {
    let results = decode_test_set(
        &outcome.best_params,
        &outcome.model,
        &outcome.vocab,
        test,
        cfg.eval_beam,
    )?;
    let table = nbest_accuracy(&results, &cfg.eval_ns)?;
    write_atomic(&dir.join("predictions.txt"), format_predictions(&results).as_bytes())?;
    write_atomic(&dir.join("eval.txt"), table.to_text().as_bytes())?;
    write_atomic(&dir.join("eval.csv"), table.to_csv().as_bytes())?;
    let max_n = *cfg.eval_ns.iter().max().unwrap_or(&1);
    let classwise = classwise_report(&results, max_n)?;
    write_atomic(&dir.join("classwise.txt"), classwise.to_text().as_bytes())?;
    write_atomic(&dir.join("classwise.csv"), classwise.to_csv().as_bytes())?;
    Ok(table)
}

fn aggregate(strategy: &str, ns: &[usize], tables: Vec<AccuracyTable>) -> StrategyScores {
    let seeds = tables.len().max(1) as f64;
    let mut mean = vec![0.0f64; ns.len()];
    for t in &tables {
        for (i, v) in t.values.iter().enumerate() {
            mean[i] += v / seeds;
        }
    }
    let mut std = vec![0.0f64; ns.len()];
    if tables.len() > 1 {
        for t in &tables {
            for (i, v) in t.values.iter().enumerate() {
                std[i] += (v - mean[i]).powi(2);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / (seeds - 1.0)).sqrt();
        }
    }
    StrategyScores {
        strategy: strategy.to_string(),
        per_seed: tables,
        mean,
        std,
    }
}

/// Run the whole comparison. Identical configs produce byte-identical
/// checkpoints, predictions files and tables.
pub fn run_replay(cfg: &ReplayConfig) -> Result<ReplayOutput, PipelineError> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    write_atomic(
        &out.join("replay_config.json"),
        serde_json::to_string_pretty(cfg)
            .expect("config serialization")
            .as_bytes(),
    )?;

    // Data generation and cleansing.
    let (target, augment_raw) = synth_generate(&cfg.synth)?;
    let (augment_train, cleanse_report) = cleanse_overlap(&augment_raw.train, &target);
    let augment = DatasetSplit {
        role: augment_raw.role,
        train: augment_train,
        val: augment_raw.val,
        test: augment_raw.test,
    };
    let data_dir = out.join("data");
    for (name, split) in [("target", &target), ("augment", &augment)] {
        let dir = data_dir.join(name);
        write_atomic(&dir.join("train.rsmi"), format_reactions(&split.train).as_bytes())?;
        write_atomic(&dir.join("val.rsmi"), format_reactions(&split.val).as_bytes())?;
        write_atomic(&dir.join("test.rsmi"), format_reactions(&split.test).as_bytes())?;
    }
    write_atomic(
        &data_dir.join("cleanse_report.txt"),
        cleanse_report.to_text().as_bytes(),
    )?;
    write_atomic(
        &data_dir.join("cleanse_report.json"),
        cleanse_report.to_json().as_bytes(),
    )?;

    let augment_products: Vec<_> = augment.train.iter().map(|s| s.product.clone()).collect();

    let mut singles: Vec<AccuracyTable> = Vec::new();
    let mut joints: Vec<AccuracyTable> = Vec::new();
    let mut selfs: Vec<AccuracyTable> = Vec::new();
    let mut fines: Vec<AccuracyTable> = Vec::new();
    let mut classwise: Vec<(String, ClasswiseReport)> = Vec::new();

    for &seed in &cfg.train_seeds {
        let seed_dir = out.join(format!("runs/seed{seed}"));

        let single_dir = seed_dir.join("single");
        let single = train_single(
            &run_config(cfg, Strategy::Single, seed, cfg.iters_single, single_dir.clone()),
            &target,
        )?;
        singles.push(evaluate(cfg, &single, &target.test, &single_dir)?);

        let joint_dir = seed_dir.join("joint");
        let joint = train_joint(
            &run_config(cfg, Strategy::Joint, seed, cfg.iters_joint, joint_dir.clone()),
            &target,
            &augment.train,
        )?;
        joints.push(evaluate(cfg, &joint, &target.test, &joint_dir)?);

        // Pseudo labels come from this seed's single model.
        let (pseudo, pseudo_report) = pseudo_label(
            &single.best_params,
            &single.model,
            &single.vocab,
            &augment_products,
        )?;
        let self_dir = seed_dir.join("self");
        std::fs::create_dir_all(&self_dir)?;
        write_atomic(
            &self_dir.join("pseudo.rsmi"),
            format_reactions(&pseudo).as_bytes(),
        )?;
        write_atomic(
            &self_dir.join("pseudo_report.txt"),
            format!(
                "total: {}\ntruncated: {}\n",
                pseudo_report.total,
                pseudo_report.truncated.len()
            )
            .as_bytes(),
        )?;
        let selftrain = train_self(
            &run_config(cfg, Strategy::SelfTrain, seed, cfg.iters_self, self_dir.clone()),
            &target,
            &pseudo,
        )?;
        selfs.push(evaluate(cfg, &selftrain, &target.test, &self_dir)?);

        let pre_dir = seed_dir.join("pretrain");
        let pre = pretrain(
            &run_config(cfg, Strategy::Pretrain, seed, cfg.iters_pretrain, pre_dir.clone()),
            &augment,
        )?;
        // Pre-training is evaluated on the augment test set.
        evaluate(cfg, &pre, &augment.test, &pre_dir)?;

        let fine_dir = seed_dir.join("finetune");
        let mut fine_run = run_config(cfg, Strategy::Finetune, seed, cfg.iters_finetune, fine_dir.clone());
        fine_run.init_checkpoint = Some(pre.best_checkpoint.clone());
        let fine = finetune(&fine_run, &target)?;
        fines.push(evaluate(cfg, &fine, &target.test, &fine_dir)?);

        // Class-wise reports from the first seed make the per-class story
        // inspectable without extra decoding passes.
        if seed == cfg.train_seeds[0] {
            let max_n = *cfg.eval_ns.iter().max().unwrap_or(&1);
            for (name, outcome) in [("single", &single), ("finetune", &fine)] {
                let results = decode_test_set(
                    &outcome.best_params,
                    &outcome.model,
                    &outcome.vocab,
                    &target.test,
                    cfg.eval_beam,
                )?;
                classwise.push((name.to_string(), classwise_report(&results, max_n)?));
            }
        }
    }

    // Rows in the presentation order: single, joint, self, pretrain+finetune.
    let table = ComparisonTable {
        ns: {
            let mut ns = cfg.eval_ns.clone();
            ns.sort_unstable();
            ns.dedup();
            ns
        },
        rows: vec![
            aggregate("single", &cfg.eval_ns, singles),
            aggregate("joint", &cfg.eval_ns, joints),
            aggregate("self", &cfg.eval_ns, selfs),
            aggregate("pretrain+finetune", &cfg.eval_ns, fines),
        ],
    };
    write_atomic(&out.join("comparison.txt"), table.to_text().as_bytes())?;
    write_atomic(&out.join("comparison.csv"), table.to_csv().as_bytes())?;

    Ok(ReplayOutput {
        table,
        cleanse_report,
        classwise,
        out_dir: out.clone(),
    })
}
