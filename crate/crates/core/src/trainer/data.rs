//! Sample encoding, token-budget batching and the data-access audit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::ReactionSample;
use crate::model::{SamplePair, Vocabulary};

/// Where a sample came from; the audit counts reads per role so scope rules
/// (pretraining never touches target data, single never touches augment
/// data) are checkable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataRole {
    Target,
    Augment,
    Pseudo,
}

impl DataRole {
    pub fn name(self) -> &'static str {
        match self {
            DataRole::Target => "target",
            DataRole::Augment => "augment",
            DataRole::Pseudo => "pseudo",
        }
    }
}

/// Counts of samples read, keyed by "role.part" (e.g. "target.train").
#[derive(Debug, Clone, Default, Serialize)]
pub struct DataAudit {
    pub reads: BTreeMap<String, u64>,
}

impl DataAudit {
    pub fn record(&mut self, role: DataRole, part: &str, count: u64) {
        *self
            .reads
            .entry(format!("{}.{part}", role.name()))
            .or_insert(0) += count;
    }

    pub fn total_for_role(&self, role: DataRole) -> u64 {
        self.reads
            .iter()
            .filter(|(k, _)| k.starts_with(role.name()))
            .map(|(_, v)| *v)
            .sum()
    }
}

pub fn tag_samples(role: DataRole, samples: &[ReactionSample]) -> Vec<(DataRole, ReactionSample)> {
    samples.iter().map(|s| (role, s.clone())).collect()
}

/// Token-encoded corpus ready for the loop.
pub struct EncodedData {
    pub pairs: Vec<(DataRole, SamplePair)>,
    /// Samples skipped because a side exceeded the model's sequence budget.
    pub dropped_too_long: usize,
}

/// Encode (product, reactants) text into id pairs, dropping samples that
/// cannot fit the model's maximum sequence length (target side needs one
/// extra slot for BOS/EOS).
pub fn encode_samples(
    samples: &[(DataRole, ReactionSample)],
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<EncodedData, crate::smiles::SmilesError> {
    let mut pairs = Vec::with_capacity(samples.len());
    let mut dropped = 0usize;
    for (role, s) in samples {
        let src = vocab.encode_text(s.product.as_str())?;
        let tgt = vocab.encode_text(&s.reactants)?;
        if src.len() > max_seq_len || tgt.len() + 1 > max_seq_len {
            dropped += 1;
            continue;
        }
        pairs.push((*role, SamplePair { src, tgt }));
    }
    Ok(EncodedData {
        pairs,
        dropped_too_long: dropped,
    })
}

fn pair_tokens(p: &SamplePair) -> usize {
    // BOS and EOS on the target side count against the budget.
    p.src.len() + p.tgt.len() + 2
}

/// Length-sorted bucketing under a token budget: samples sort by size (ties
/// by position), then pack greedily. Every batch holds at least one sample.
/// Batch composition is fixed; epoch shuffling permutes batch order only.
pub fn plan_batches(pairs: &[(DataRole, SamplePair)], batch_tokens: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| (pair_tokens(&pairs[i].1), i));

    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_tokens = 0usize;
    for i in order {
        let cost = pair_tokens(&pairs[i].1);
        if !current.is_empty() && current_tokens + cost > batch_tokens {
            batches.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current.push(i);
        current_tokens += cost;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}
