//! retroseq: a desk-scale toolkit for studying data-transfer training of
//! seq2seq retrosynthesis models.
//!
//! The crate covers the full experiment pipeline: SMILES parsing and
//! canonicalization ([`smiles`]), reaction corpus handling and cleansing
//! ([`dataset`]), a from-scratch Transformer encoder-decoder with exact
//! reverse-mode gradients ([`model`]), Adam plus the two learning-rate
//! schedules ([`optim`]), the four training regimes ([`trainer`]),
//! beam-search decoding with n-best scoring ([`decode`]), and a one-shot
//! strategy-comparison pipeline ([`pipeline`]).

pub mod dataset;
pub mod decode;
pub mod fsutil;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod smiles;
pub mod trainer;

mod util;
