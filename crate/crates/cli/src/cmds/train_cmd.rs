//! The `train` subcommand: strategy dispatch plus per-strategy flag rules.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};

use retroseq::dataset::{load_pseudo_reactions, load_reactions, CorpusRole, ReactionFileFormat};
use retroseq::trainer::{
    finetune, pretrain, train_joint, train_self, train_single, ScheduleSpec, Strategy,
    TrainOutcome, TrainRunConfig,
};

use super::build;
use super::{load_split_dir, usage};
use crate::kvcfg::KvConfig;

pub struct TrainArgs {
    pub strategy: String,
    pub target_dir: Option<PathBuf>,
    pub augment_dir: Option<PathBuf>,
    pub pseudo_file: Option<PathBuf>,
    pub init_checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iters: Option<u64>,
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let strategy = match args.strategy.as_str() {
        "single" => Strategy::Single,
        "joint" => Strategy::Joint,
        "self" => Strategy::SelfTrain,
        "pretrain" => Strategy::Pretrain,
        "finetune" => Strategy::Finetune,
        other => {
            return usage(&format!(
                "unknown strategy {other:?}; choose single, joint, self, pretrain or finetune"
            ))
        }
    };

    // Per-strategy dataset requirements.
    match strategy {
        Strategy::Single | Strategy::SelfTrain | Strategy::Joint | Strategy::Finetune => {
            if args.target_dir.is_none() {
                return usage(&format!("--strategy {} requires --target-dir", args.strategy));
            }
        }
        Strategy::Pretrain => {
            if args.target_dir.is_some() {
                return usage("pretraining reads no target data; omit --target-dir");
            }
        }
    }
    match strategy {
        Strategy::Joint | Strategy::Pretrain => {
            if args.augment_dir.is_none() {
                return usage(&format!("--strategy {} requires --augment-dir", args.strategy));
            }
        }
        _ => {}
    }
    if strategy == Strategy::SelfTrain && args.pseudo_file.is_none() {
        return usage("--strategy self requires --pseudo-file");
    }
    if strategy == Strategy::Finetune && args.init_checkpoint.is_none() {
        return usage("--strategy finetune requires --init-checkpoint");
    }

    let run = build_run_config(&args, strategy)?;
    let outcome = dispatch(strategy, &run, &args)?;
    println!(
        "{}: best validation perplexity {:.4} at iteration {} -> {}",
        strategy.name(),
        outcome.best_val_perplexity,
        outcome.best_iteration,
        outcome.best_checkpoint.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn build_run_config(args: &TrainArgs, strategy: Strategy) -> Result<TrainRunConfig> {
    let kv = match &args.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::empty(),
    };
    let mut run = TrainRunConfig::new(strategy, &args.out_dir);
    run.model = build::model_from_kv(&kv)?;
    run.adam = build::adam_from_kv(&kv)?;
    run.total_iters = kv.get_or("train.iters", run.total_iters)?;
    run.batch_tokens = kv.get_or("train.batch_tokens", run.batch_tokens)?;
    run.val_interval = kv.get_or("train.val_interval", run.val_interval)?;
    run.seed = kv.get_or("train.seed", run.seed)?;
    run.test_eval_beam = kv.get_or("train.test_eval_beam", run.test_eval_beam)?;
    let test_every = kv.get_or("train.test_eval_interval", 0u64)?;
    run.test_eval_interval = (test_every > 0).then_some(test_every);
    let clip = kv.get_or("train.clip_norm", run.clip_norm.unwrap_or(0.0))?;
    run.clip_norm = (clip > 0.0).then_some(clip);
    // Fine-tuning defaults to the gentler non-cyclic settings.
    let schedule_default = if strategy == Strategy::Finetune {
        ScheduleSpec {
            peak_lr: 3e-4,
            min_lr: 0.0,
            warmup_steps: Some(20),
            cycle_period: None,
        }
    } else {
        ScheduleSpec::default()
    };
    run.schedule = build::schedule_from_kv(&kv, "schedule", schedule_default)?;
    kv.finish()?;

    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    if let Some(iters) = args.iters {
        run.total_iters = iters;
    }
    run.init_checkpoint = args.init_checkpoint.clone();
    Ok(run)
}

fn dispatch(strategy: Strategy, run: &TrainRunConfig, args: &TrainArgs) -> Result<TrainOutcome> {
    let target = || -> Result<_> {
        load_split_dir(args.target_dir.as_ref().expect("validated"), CorpusRole::Target)
    };
    let outcome = match strategy {
        Strategy::Single => train_single(run, &target()?)?,
        Strategy::Joint => {
            let augment_dir = args.augment_dir.as_ref().expect("validated");
            let augment = load_reactions(
                &augment_dir.join("train.rsmi"),
                ReactionFileFormat::ReactionSmiles,
            )
            .with_context(|| format!("loading {}", augment_dir.display()))?;
            train_joint(run, &target()?, &augment.samples)?
        }
        Strategy::SelfTrain => {
            let pseudo_path = args.pseudo_file.as_ref().expect("validated");
            let pseudo = load_pseudo_reactions(pseudo_path)
                .with_context(|| format!("loading {}", pseudo_path.display()))?;
            train_self(run, &target()?, &pseudo)?
        }
        Strategy::Pretrain => {
            let augment_dir = args.augment_dir.as_ref().expect("validated");
            let augment = load_split_dir(augment_dir, CorpusRole::Augment)?;
            pretrain(run, &augment)?
        }
        Strategy::Finetune => finetune(run, &target()?)?,
    };
    Ok(outcome)
}
