//! Reaction corpora: ingestion, cleansing, splitting and synthetic
//! desk-scale generation.
//!
//! Reaction file format: UTF-8 lines of `REACTION_SMILES[\tCLASS_LABEL]`
//! where the reaction is `reactants>>product` or
//! `reactants>reagents>product` (reagents are discarded) and multi-compound
//! sides join components with '.'.

mod cleanse;
mod load;
mod split;
mod synth;

pub use cleanse::{cleanse_overlap, CleanseReport};
pub use load::{
    format_reactions, load_pseudo_reactions, load_reactions, load_reactions_with, reaction_line,
    LoadOptions, LoadedReactions, ReactionFileFormat,
};
pub use split::{concat_splits, split_dataset};
pub use synth::{synth_generate, SplitCounts, SynthConfig, TEMPLATE_COUNT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smiles::{canonical_reactant_set, canonicalize, CanonicalSmiles, SmilesError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {malformed} of {total} lines malformed (limit {limit:.1}%); first: {first}")]
    Format {
        path: String,
        malformed: usize,
        total: usize,
        limit: f64,
        first: String,
    },
    #[error("too few samples: {have} cannot fill {part}")]
    TooFewSamples { have: usize, part: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
}

/// One retrosynthesis pair: product `x`, reactant set `y`.
///
/// Samples built by the loader or the generator carry a canonical product and
/// a reactant string equal to the canonical reactant set of its components.
/// Pseudo-labeled samples ([`ReactionSample::pseudo`]) keep the decoded
/// reactant text verbatim; it is training text, not chemistry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionSample {
    pub product: CanonicalSmiles,
    pub reactants: String,
    pub class_label: Option<String>,
}

impl ReactionSample {
    /// Canonicalize and validate a (product, reactants) pair.
    pub fn new(
        product: &str,
        reactants: &[String],
        class_label: Option<String>,
    ) -> Result<Self, DatasetError> {
        let product = canonicalize(product)?;
        if product.as_str().contains('.') {
            return Err(DatasetError::InvalidSample(format!(
                "product {product} is not a single compound"
            )));
        }
        if reactants.is_empty() {
            return Err(DatasetError::InvalidSample("empty reactant set".into()));
        }
        let reactants = canonical_reactant_set(reactants)?;
        Ok(ReactionSample {
            product,
            reactants,
            class_label,
        })
    }

    /// Wrap a model-decoded reactant string without canonicalization.
    pub fn pseudo(product: CanonicalSmiles, decoded_reactants: String) -> Self {
        ReactionSample {
            product,
            reactants: decoded_reactants,
            class_label: None,
        }
    }

    /// Identity used for split disjointness and deduplication.
    pub fn pair_key(&self) -> (String, String) {
        (self.product.as_str().to_string(), self.reactants.clone())
    }
}

/// Which corpus a split belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusRole {
    Target,
    Augment,
}

impl CorpusRole {
    pub fn name(self) -> &'static str {
        match self {
            CorpusRole::Target => "target",
            CorpusRole::Augment => "augment",
        }
    }
}

/// Named train/val/test partition of one corpus.
///
/// The three subsets are expected to be pairwise disjoint on
/// (product, reactants) pairs; [`DatasetSplit::check_disjoint`] verifies it
/// (generated corpora satisfy it by construction, noisy external corpora may
/// not).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub role: CorpusRole,
    pub train: Vec<ReactionSample>,
    pub val: Vec<ReactionSample>,
    pub test: Vec<ReactionSample>,
}

impl DatasetSplit {
    pub fn total_len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// All products across the three subsets.
    pub fn all_products(&self) -> impl Iterator<Item = &CanonicalSmiles> {
        self.train
            .iter()
            .chain(self.val.iter())
            .chain(self.test.iter())
            .map(|s| &s.product)
    }

    pub fn check_disjoint(&self) -> Result<(), DatasetError> {
        use std::collections::HashSet;
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (part, samples) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            let mut local: HashSet<(String, String)> = HashSet::new();
            for s in samples {
                local.insert(s.pair_key());
            }
            for key in &local {
                if !seen.insert(key.clone()) {
                    return Err(DatasetError::InvalidSample(format!(
                        "(product, reactants) pair {key:?} appears in multiple subsets (found again in {part})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_canonicalizes_both_sides() {
        let s = ReactionSample::new(
            "OCC",
            &["CC(=O)O".to_string(), "OCC".to_string()],
            Some("RX_2".to_string()),
        )
        .unwrap();
        assert_eq!(s.product.as_str(), "CCO");
        // Reactants equal the canonical set of their components regardless of
        // input spelling and order.
        let expected =
            canonical_reactant_set(&["OC(C)=O".to_string(), "CCO".to_string()]).unwrap();
        assert_eq!(s.reactants, expected);
        assert!(s.reactants.ends_with(".CCO"));
    }

    #[test]
    fn multi_component_product_rejected() {
        let err = ReactionSample::new("CC.O", &["C".to_string()], None).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidSample(_)));
    }

    #[test]
    fn recanonicalization_is_fixed_point() {
        let s = ReactionSample::new(
            "CC(=O)OCC",
            &["CCO".to_string(), "CC(=O)O".to_string()],
            None,
        )
        .unwrap();
        let again = ReactionSample::new(
            s.product.as_str(),
            &[s.reactants.clone()],
            s.class_label.clone(),
        )
        .unwrap();
        assert_eq!(s.product, again.product);
        assert_eq!(s.reactants, again.reactants);
    }

    #[test]
    fn disjointness_detected() {
        let a = ReactionSample::new("CCO", &["CCBr".to_string()], None).unwrap();
        let split = DatasetSplit {
            role: CorpusRole::Target,
            train: vec![a.clone()],
            val: vec![a],
            test: vec![],
        };
        assert!(split.check_disjoint().is_err());
    }
}
