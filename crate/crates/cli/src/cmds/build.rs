//! Builders mapping `key = value` config files onto the library structs.
//! Every key is optional; defaults match the built-in desk-scale setup.

use std::path::Path;

use anyhow::Result;

use retroseq::dataset::{SplitCounts, SynthConfig};
use retroseq::model::ModelConfig;
use retroseq::optim::AdamParams;
use retroseq::pipeline::ReplayConfig;
use retroseq::trainer::ScheduleSpec;

use crate::kvcfg::KvConfig;

pub fn synth_config(path: Option<&Path>) -> Result<SynthConfig> {
    let kv = match path {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::empty(),
    };
    let cfg = synth_from_kv(&kv)?;
    kv.finish()?;
    Ok(cfg)
}

pub fn synth_from_kv(kv: &KvConfig) -> Result<SynthConfig> {
    let d = SynthConfig::default();
    Ok(SynthConfig {
        target_templates: kv
            .get_list("synth.target.templates")?
            .unwrap_or(d.target_templates),
        augment_templates: kv
            .get_list("synth.augment.templates")?
            .unwrap_or(d.augment_templates),
        target_counts: SplitCounts::new(
            kv.get_or("synth.target.train", d.target_counts.train)?,
            kv.get_or("synth.target.val", d.target_counts.val)?,
            kv.get_or("synth.target.test", d.target_counts.test)?,
        ),
        augment_counts: SplitCounts::new(
            kv.get_or("synth.augment.train", d.augment_counts.train)?,
            kv.get_or("synth.augment.val", d.augment_counts.val)?,
            kv.get_or("synth.augment.test", d.augment_counts.test)?,
        ),
        fragment_pool_size: kv.get_or("synth.fragment_pool", d.fragment_pool_size)?,
        seed: kv.get_or("synth.seed", d.seed)?,
    })
}

pub fn model_from_kv(kv: &KvConfig) -> Result<ModelConfig> {
    let d = ModelConfig::desk_scale(4);
    Ok(ModelConfig {
        vocab_size: d.vocab_size,
        num_layers: kv.get_or("model.layers", d.num_layers)?,
        model_dim: kv.get_or("model.dim", d.model_dim)?,
        num_heads: kv.get_or("model.heads", d.num_heads)?,
        ffn_dim: kv.get_or("model.ffn_dim", d.ffn_dim)?,
        max_seq_len: kv.get_or("model.max_seq_len", d.max_seq_len)?,
        dropout_rate: kv.get_or("model.dropout", d.dropout_rate)?,
        layernorm_eps: kv.get_or("model.layernorm_eps", d.layernorm_eps)?,
        label_smoothing: kv.get_or("model.label_smoothing", d.label_smoothing)?,
    })
}

pub fn adam_from_kv(kv: &KvConfig) -> Result<AdamParams> {
    let d = AdamParams::default();
    Ok(AdamParams {
        beta1: kv.get_or("adam.beta1", d.beta1)?,
        beta2: kv.get_or("adam.beta2", d.beta2)?,
        eps: kv.get_or("adam.eps", d.eps)?,
    })
}

/// Zero means "auto" for warm-up and period.
pub fn schedule_from_kv(kv: &KvConfig, prefix: &str, default: ScheduleSpec) -> Result<ScheduleSpec> {
    let warmup = kv.get_or(
        &format!("{prefix}.warmup"),
        default.warmup_steps.unwrap_or(0),
    )?;
    let period = kv.get_or(
        &format!("{prefix}.period"),
        default.cycle_period.unwrap_or(0),
    )?;
    Ok(ScheduleSpec {
        peak_lr: kv.get_or(&format!("{prefix}.peak_lr"), default.peak_lr)?,
        min_lr: kv.get_or(&format!("{prefix}.min_lr"), default.min_lr)?,
        warmup_steps: (warmup > 0).then_some(warmup),
        cycle_period: (period > 0).then_some(period),
    })
}

pub fn replay_config(path: Option<&Path>, out_dir: Option<&Path>) -> Result<ReplayConfig> {
    let kv = match path {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::empty(),
    };
    let fallback_dir = std::path::PathBuf::from("replay_out");
    let d = ReplayConfig::toy(&fallback_dir);
    let out = match out_dir {
        Some(p) => p.to_path_buf(),
        None => kv
            .get::<String>("replay.out_dir")?
            .map(std::path::PathBuf::from)
            .unwrap_or(fallback_dir),
    };
    let cfg = ReplayConfig {
        synth: synth_from_kv(&kv)?,
        train_seeds: kv.get_list("replay.seeds")?.unwrap_or(d.train_seeds),
        model: model_from_kv(&kv)?,
        batch_tokens: kv.get_or("train.batch_tokens", d.batch_tokens)?,
        val_interval: kv.get_or("train.val_interval", d.val_interval)?,
        iters_single: kv.get_or("replay.iters.single", d.iters_single)?,
        iters_joint: kv.get_or("replay.iters.joint", d.iters_joint)?,
        iters_self: kv.get_or("replay.iters.self", d.iters_self)?,
        iters_pretrain: kv.get_or("replay.iters.pretrain", d.iters_pretrain)?,
        iters_finetune: kv.get_or("replay.iters.finetune", d.iters_finetune)?,
        schedule: schedule_from_kv(&kv, "schedule", d.schedule)?,
        finetune_schedule: schedule_from_kv(&kv, "finetune.schedule", d.finetune_schedule)?,
        adam: adam_from_kv(&kv)?,
        clip_norm: {
            let clip = kv.get_or("train.clip_norm", d.clip_norm.unwrap_or(0.0))?;
            (clip > 0.0).then_some(clip)
        },
        eval_beam: kv.get_or("replay.eval.beam", d.eval_beam)?,
        eval_ns: kv.get_list("replay.eval.ns")?.unwrap_or(d.eval_ns),
        test_eval_interval: {
            let every = kv.get_or("train.test_eval_interval", 0u64)?;
            (every > 0).then_some(every)
        },
        out_dir: out,
    };
    kv.finish()?;
    Ok(cfg)
}
