//! Deterministic splitting and concatenation.

use rand::seq::SliceRandom;

use super::{CorpusRole, DatasetError, DatasetSplit, ReactionSample};
use crate::util::seed_rng;

/// Shuffle deterministically by `seed` and partition by `fractions`
/// (train, val, test). Sizes land within one sample of the exact fractions.
pub fn split_dataset(
    samples: Vec<ReactionSample>,
    fractions: (f64, f64, f64),
    seed: u64,
    role: CorpusRole,
) -> Result<DatasetSplit, DatasetError> {
    let (ft, fv, fs) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fs <= 0.0 {
        return Err(DatasetError::Config(
            "split fractions must be positive".into(),
        ));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Config(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fs
        )));
    }
    let n = samples.len();
    let n_train = (n as f64 * ft).round() as usize;
    let n_val = (n as f64 * fv).round() as usize;
    let n_test = n.saturating_sub(n_train + n_val);
    for (count, part) in [(n_train, "train"), (n_val, "val"), (n_test, "test")] {
        if count == 0 {
            return Err(DatasetError::TooFewSamples { have: n, part });
        }
    }
    if n_train + n_val > n {
        return Err(DatasetError::TooFewSamples { have: n, part: "test" });
    }

    let mut shuffled = samples;
    shuffled.shuffle(&mut seed_rng(seed, "split"));
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        role,
        train: shuffled,
        val,
        test,
    })
}

/// Multiset union preserving order: all of `a`, then all of `b`.
pub fn concat_splits(a: &[ReactionSample], b: &[ReactionSample]) -> Vec<ReactionSample> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize) -> Vec<ReactionSample> {
        (0..n)
            .map(|i| {
                ReactionSample::new(
                    &format!("{}O", "C".repeat(i + 1)),
                    &["CBr".to_string()],
                    None,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_fraction_sizes() {
        let split = split_dataset(samples(100), (0.8, 0.1, 0.1), 7, CorpusRole::Target).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.val.len(), 10);
        assert_eq!(split.test.len(), 10);
        split.check_disjoint().unwrap();
    }

    #[test]
    fn same_seed_same_partition() {
        let a = split_dataset(samples(50), (0.6, 0.2, 0.2), 3, CorpusRole::Target).unwrap();
        let b = split_dataset(samples(50), (0.6, 0.2, 0.2), 3, CorpusRole::Target).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        let c = split_dataset(samples(50), (0.6, 0.2, 0.2), 4, CorpusRole::Target).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn too_few_samples() {
        let err =
            split_dataset(samples(2), (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 1, CorpusRole::Target)
                .unwrap_err();
        assert!(matches!(err, DatasetError::TooFewSamples { .. }));
    }

    #[test]
    fn bad_fractions() {
        assert!(split_dataset(samples(10), (0.5, 0.5, 0.5), 1, CorpusRole::Target).is_err());
        assert!(split_dataset(samples(10), (1.0, -0.5, 0.5), 1, CorpusRole::Target).is_err());
    }

    #[test]
    fn concat_lengths_and_order() {
        let a = samples(5);
        let b = samples(3);
        let joined = concat_splits(&a, &b);
        assert_eq!(joined.len(), 8);
        assert_eq!(&joined[..5], &a[..]);
        assert_eq!(&joined[5..], &b[..]);
        assert_eq!(concat_splits(&a, &[]), a);
        assert!(concat_splits(&[], &[]).is_empty());
    }

    #[test]
    fn concat_paper_scale_lengths() {
        // Length additivity at the corpus sizes the pipeline is meant for.
        let a = vec![ReactionSample::new("CCO", &["CCBr".to_string()], None).unwrap(); 40_000];
        let b = vec![ReactionSample::new("CCO", &["CCBr".to_string()], None).unwrap(); 844_000];
        assert_eq!(concat_splits(&a, &b).len(), 884_000);
    }
}
