//! Micro Transformer encoder-decoder over token sequences, with exact
//! reverse-mode gradients and a portable checkpoint format.

mod checkpoint;
mod config;
pub mod forward;
pub mod infer;
mod params;
pub mod tensor;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use forward::{batch_loss, forward, loss_and_grad, DropoutPlan, LossValue, SamplePair};
pub use infer::{decode_step, encode, DecoderState, EncodedSource};
pub use params::{init_params, ParameterSet};
pub use tensor::Tensor;
pub use vocab::Vocabulary;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint incompatible: {0}")]
    VersionMismatch(String),
    #[error("checkpoint corrupt: checksum mismatch")]
    ChecksumMismatch,
}

#[cfg(test)]
mod tests {
    use super::forward::{forward, loss_and_grad, SamplePair};
    use super::vocab::BOS;
    use super::*;

    fn tiny_cfg(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            num_layers: 1,
            model_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 16,
            dropout_rate: 0.0,
            layernorm_eps: 1e-5,
            label_smoothing: 0.0,
        }
    }

    fn zero_params(cfg: &ModelConfig) -> ParameterSet {
        let mut p = init_params(cfg, 0).unwrap();
        for (_, t) in p.iter_mut() {
            t.fill(0.0);
        }
        p
    }

    #[test]
    fn zero_parameters_give_uniform_softmax() {
        let cfg = tiny_cfg(10);
        let params = zero_params(&cfg);
        let logits = forward(&params, &cfg, &[4, 5, 6], &[BOS, 7, 8]).unwrap();
        for &l in &logits {
            assert_eq!(l, 0.0);
        }
        // Uniform softmax and mean NLL of ln |V|.
        let batch = [SamplePair {
            src: vec![4, 5, 6],
            tgt: vec![7, 8],
        }];
        let (loss, _) = loss_and_grad(&params, &cfg, &batch, None).unwrap();
        assert!((loss.mean - (10f64).ln()).abs() < 1e-12);
        assert!((loss.perplexity() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn causality_future_tokens_do_not_leak() {
        let cfg = tiny_cfg(12);
        let params = init_params(&cfg, 5).unwrap();
        let src = vec![4, 5];
        let a = forward(&params, &cfg, &src, &[BOS, 6, 7, 8]).unwrap();
        let b = forward(&params, &cfg, &src, &[BOS, 6, 11, 9]).unwrap();
        let v = cfg.vocab_size;
        // Positions 0..=1 must match exactly; the change at position 2 only
        // affects positions >= 2.
        for t in 0..2 {
            for j in 0..v {
                assert_eq!(a[t * v + j].to_bits(), b[t * v + j].to_bits());
            }
        }
        assert!(a[2 * v..3 * v] != b[2 * v..3 * v]);
    }

    #[test]
    fn softmax_rows_normalize() {
        let cfg = tiny_cfg(9);
        let params = init_params(&cfg, 2).unwrap();
        let logits = forward(&params, &cfg, &[4, 5, 6, 7], &[BOS, 4]).unwrap();
        let v = cfg.vocab_size;
        for t in 0..2 {
            let row = &logits[t * v..(t + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            let norm: f64 = row.iter().map(|&x| (x - max).exp() / sum).sum();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let cfg = tiny_cfg(12);
        let params = init_params(&cfg, 8).unwrap();
        let a = forward(&params, &cfg, &[4, 5, 6], &[BOS, 7]).unwrap();
        let b = forward(&params, &cfg, &[4, 5, 6], &[BOS, 7]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn sequence_too_long_rejected() {
        let cfg = tiny_cfg(10);
        let params = init_params(&cfg, 1).unwrap();
        let long: Vec<usize> = vec![4; cfg.max_seq_len + 1];
        assert!(matches!(
            forward(&params, &cfg, &long, &[BOS]),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn unused_embedding_row_gets_zero_gradient() {
        let cfg = tiny_cfg(12);
        let params = init_params(&cfg, 3).unwrap();
        let batch = [SamplePair {
            src: vec![4, 5],
            tgt: vec![6],
        }];
        let (_, grads) = loss_and_grad(&params, &cfg, &batch, None).unwrap();
        let emb = grads.get("embed.tok");
        let d = cfg.model_dim;
        // Token 11 appears nowhere in the batch: exact zero gradient row.
        for j in 0..d {
            assert_eq!(emb.data()[11 * d + j], 0.0);
        }
        // Used tokens have nonzero gradient somewhere.
        assert!(emb.data()[4 * d..5 * d].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn grad_accumulation_is_chunk_order_invariant() {
        // Identical batch, evaluated twice: gradients must be bit-identical
        // regardless of rayon scheduling.
        let cfg = tiny_cfg(12);
        let params = init_params(&cfg, 4).unwrap();
        let batch: Vec<SamplePair> = (0..20)
            .map(|i| SamplePair {
                src: vec![4 + (i % 5), 5, 6],
                tgt: vec![7, 8 + (i % 3)],
            })
            .collect();
        let (l1, g1) = loss_and_grad(&params, &cfg, &batch, None).unwrap();
        let (l2, g2) = loss_and_grad(&params, &cfg, &batch, None).unwrap();
        assert_eq!(l1.total.to_bits(), l2.total.to_bits());
        assert!(g1.bits_equal(&g2));
    }

    #[test]
    fn dropout_plan_is_deterministic_and_masks_scale() {
        let mut cfg = tiny_cfg(12);
        cfg.dropout_rate = 0.3;
        let params = init_params(&cfg, 4).unwrap();
        let batch = [SamplePair {
            src: vec![4, 5, 6],
            tgt: vec![7, 8],
        }];
        let plan = DropoutPlan {
            rate: 0.3,
            seed: 99,
        };
        let (l1, g1) = loss_and_grad(&params, &cfg, &batch, Some(&plan)).unwrap();
        let (l2, g2) = loss_and_grad(&params, &cfg, &batch, Some(&plan)).unwrap();
        assert_eq!(l1.total.to_bits(), l2.total.to_bits());
        assert!(g1.bits_equal(&g2));
        let other = DropoutPlan {
            rate: 0.3,
            seed: 100,
        };
        let (l3, _) = loss_and_grad(&params, &cfg, &batch, Some(&other)).unwrap();
        assert_ne!(l1.total.to_bits(), l3.total.to_bits());
    }
}
