//! Regime-level behavior: determinism, strategy identities, snapshot
//! selection, data-scope audits. Runs are kept tiny so the whole file
//! finishes in seconds.

use std::path::Path;

use retroseq::dataset::{synth_generate, DatasetSplit, SplitCounts, SynthConfig};
use retroseq::model::{load_checkpoint, ModelConfig};
use retroseq::trainer::{
    finetune, pretrain, pseudo_label, train_joint, train_self, train_single, validate_perplexity,
    DataRole, SnapshotLedger, Strategy, TrainError, TrainRunConfig,
};

fn tiny_synth() -> (DatasetSplit, DatasetSplit) {
    let cfg = SynthConfig {
        target_templates: vec![0, 1],
        augment_templates: vec![0, 1, 2, 3, 4, 5, 6, 7],
        target_counts: SplitCounts::new(40, 8, 8),
        augment_counts: SplitCounts::new(120, 12, 12),
        fragment_pool_size: 16,
        seed: 3,
    };
    synth_generate(&cfg).unwrap()
}

fn tiny_run(strategy: Strategy, out_dir: &Path, seed: u64) -> TrainRunConfig {
    let mut run = TrainRunConfig::new(strategy, out_dir);
    run.model = ModelConfig {
        vocab_size: 4,
        num_layers: 1,
        model_dim: 16,
        num_heads: 2,
        ffn_dim: 32,
        max_seq_len: 64,
        dropout_rate: 0.0,
        layernorm_eps: 1e-5,
        label_smoothing: 0.0,
    };
    run.total_iters = 12;
    run.val_interval = 4;
    run.batch_tokens = 512;
    run.seed = seed;
    run
}

#[test]
fn single_run_is_deterministic() {
    let (target, _) = tiny_synth();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = train_single(&tiny_run(Strategy::Single, d1.path(), 7), &target).unwrap();
    let b = train_single(&tiny_run(Strategy::Single, d2.path(), 7), &target).unwrap();
    assert!(a.best_params.bits_equal(&b.best_params));
    assert_eq!(a.best_iteration, b.best_iteration);
    // Checkpoint files byte-identical across runs.
    let ba = std::fs::read(&a.best_checkpoint).unwrap();
    let bb = std::fs::read(&b.best_checkpoint).unwrap();
    assert_eq!(ba, bb);

    let d3 = tempfile::tempdir().unwrap();
    let c = train_single(&tiny_run(Strategy::Single, d3.path(), 8), &target).unwrap();
    assert!(!c.best_params.bits_equal(&a.best_params));
}

#[test]
fn joint_with_empty_augment_equals_single() {
    let (target, _) = tiny_synth();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let single = train_single(&tiny_run(Strategy::Single, d1.path(), 5), &target).unwrap();
    let joint = train_joint(&tiny_run(Strategy::Joint, d2.path(), 5), &target, &[]).unwrap();
    assert!(single.best_params.bits_equal(&joint.best_params));
    assert_eq!(single.best_iteration, joint.best_iteration);
}

#[test]
fn self_with_empty_pseudo_equals_single() {
    let (target, _) = tiny_synth();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let single = train_single(&tiny_run(Strategy::Single, d1.path(), 5), &target).unwrap();
    let selftrain =
        train_self(&tiny_run(Strategy::SelfTrain, d2.path(), 5), &target, &[]).unwrap();
    assert!(single.best_params.bits_equal(&selftrain.best_params));
}

#[test]
fn joint_detects_leaks() {
    let (target, _) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    // The target's own training data collides with itself by construction.
    let leaked = vec![target.train[0].clone()];
    match train_joint(&tiny_run(Strategy::Joint, d.path(), 5), &target, &leaked) {
        Err(TrainError::LeakDetected { count: 1 }) => {}
        Err(other) => panic!("expected LeakDetected, got {other}"),
        Ok(_) => panic!("leaked run must abort"),
    }
}

#[test]
fn joint_sees_union_of_training_sets() {
    let (target, augment) = tiny_synth();
    let (cleansed, _) = retroseq::dataset::cleanse_overlap(&augment.train, &target);
    let d = tempfile::tempdir().unwrap();
    let mut run = tiny_run(Strategy::Joint, d.path(), 5);
    run.total_iters = 6;
    let out = train_joint(&run, &target, &cleansed).unwrap();
    // Every training read is target or augment; both roles appear.
    assert!(out.audit.reads["target.train"] > 0);
    assert!(out.audit.reads["augment.train"] > 0);
}

#[test]
fn pretrain_never_reads_target() {
    let (_, augment) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    let out = pretrain(&tiny_run(Strategy::Pretrain, d.path(), 5), &augment).unwrap();
    assert_eq!(out.audit.total_for_role(DataRole::Target), 0);
    assert!(out.audit.reads["augment.train"] > 0);
    assert!(out.audit.reads["augment.val"] > 0);
}

#[test]
fn single_never_reads_augment() {
    let (target, _) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    let out = train_single(&tiny_run(Strategy::Single, d.path(), 5), &target).unwrap();
    assert_eq!(out.audit.total_for_role(DataRole::Augment), 0);
    assert_eq!(out.audit.total_for_role(DataRole::Pseudo), 0);
}

#[test]
fn finetune_initializes_from_checkpoint_bit_exact() {
    let (target, augment) = tiny_synth();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let pre = pretrain(&tiny_run(Strategy::Pretrain, d1.path(), 5), &augment).unwrap();

    let mut run = tiny_run(Strategy::Finetune, d2.path(), 5);
    run.init_checkpoint = Some(pre.best_checkpoint.clone());
    let fine = finetune(&run, &target).unwrap();
    assert!(fine.initial_params.bits_equal(&pre.best_params));
    let (loaded, _, _) = load_checkpoint(&pre.best_checkpoint).unwrap();
    assert!(fine.initial_params.bits_equal(&loaded));
}

#[test]
fn finetune_requires_checkpoint_and_matching_architecture() {
    let (target, augment) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    let run = tiny_run(Strategy::Finetune, d.path(), 5);
    assert!(matches!(
        finetune(&run, &target),
        Err(TrainError::Config(_))
    ));

    let d1 = tempfile::tempdir().unwrap();
    let pre = pretrain(&tiny_run(Strategy::Pretrain, d1.path(), 5), &augment).unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let mut wrong = tiny_run(Strategy::Finetune, d2.path(), 5);
    wrong.init_checkpoint = Some(pre.best_checkpoint.clone());
    wrong.model.model_dim = 32;
    wrong.model.num_heads = 4;
    assert!(matches!(
        finetune(&wrong, &target),
        Err(TrainError::Model(
            retroseq::model::ModelError::VersionMismatch(_)
        ))
    ));
}

#[test]
fn ledger_best_is_argmin_with_earliest_tie() {
    let mut ledger = SnapshotLedger::default();
    for (iter, ppl) in [(10u64, 3.0f64), (20, 2.5), (30, 2.7), (40, 2.5)] {
        ledger.entries.push(retroseq::trainer::LedgerEntry {
            iteration: iter,
            val_perplexity: ppl,
            checkpoint: None,
        });
    }
    let best = ledger.best().unwrap();
    assert_eq!(best.iteration, 20);
    assert_eq!(ledger.best_index(), Some(1));
}

#[test]
fn curve_rows_per_validation_interval() {
    let (target, _) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    let mut run = tiny_run(Strategy::Single, d.path(), 5);
    run.total_iters = 12;
    run.val_interval = 3;
    let out = train_single(&run, &target).unwrap();
    assert_eq!(out.curves.rows.len(), 4);
    assert!(out.curves.iterations_strictly_increasing());
    // CSV roundtrip.
    let text = out.curves.to_csv();
    let parsed = retroseq::trainer::CurveLog::from_csv(&text).unwrap();
    assert_eq!(parsed.rows.len(), 4);
    assert_eq!(parsed.rows[3].iteration, 12);
}

#[test]
fn pseudo_label_preserves_products_and_is_deterministic() {
    let (target, augment) = tiny_synth();
    let d = tempfile::tempdir().unwrap();
    let out = train_single(&tiny_run(Strategy::Single, d.path(), 5), &target).unwrap();
    let products: Vec<_> = augment.train.iter().take(12).map(|s| s.product.clone()).collect();
    let (pseudo1, report) =
        pseudo_label(&out.best_params, &out.model, &out.vocab, &products).unwrap();
    assert_eq!(pseudo1.len(), products.len());
    assert_eq!(report.total, products.len());
    for (p, s) in products.iter().zip(&pseudo1) {
        assert_eq!(&s.product, p);
        assert!(s.class_label.is_none());
    }
    let (pseudo2, _) =
        pseudo_label(&out.best_params, &out.model, &out.vocab, &products).unwrap();
    assert_eq!(pseudo1, pseudo2);
}

#[test]
fn perplexity_of_uniform_model_is_vocab_size() {
    use retroseq::model::{init_params, SamplePair};
    let cfg = ModelConfig {
        vocab_size: 10,
        num_layers: 1,
        model_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        max_seq_len: 16,
        dropout_rate: 0.0,
        layernorm_eps: 1e-5,
        label_smoothing: 0.0,
    };
    let mut params = init_params(&cfg, 0).unwrap();
    for (_, t) in params.iter_mut() {
        t.fill(0.0);
    }
    let samples = vec![
        SamplePair {
            src: vec![4, 5],
            tgt: vec![6, 7],
        },
        SamplePair {
            src: vec![5],
            tgt: vec![8],
        },
    ];
    let ppl = validate_perplexity(&params, &cfg, &samples).unwrap();
    assert!((ppl - 10.0).abs() < 1e-9);
    assert!(ppl >= 1.0);
    // Identical inputs give identical perplexity.
    let again = validate_perplexity(&params, &cfg, &samples).unwrap();
    assert_eq!(ppl.to_bits(), again.to_bits());
    // Empty validation set is an error.
    assert!(matches!(
        validate_perplexity(&params, &cfg, &[]),
        Err(TrainError::EmptyDataset(_))
    ));
}
