//! Beam-search decoding and n-best accuracy scoring.

mod eval;
pub mod report;

pub use eval::{
    classwise_report, match_prediction, match_rank, nbest_accuracy, AccuracyTable,
    ClasswiseReport, EvalError,
};

use crate::model::vocab::{BOS, EOS, PAD};
use crate::model::{decode_step, encode, DecoderState, ModelConfig, ModelError, ParameterSet, Vocabulary};
use crate::smiles::canonical_reactant_set;

/// One ranked candidate. `tokens` excludes BOS and EOS; `score` is the total
/// unnormalized sequence log-probability (EOS included unless truncated).
#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
    /// Hit the length limit without emitting EOS.
    pub truncated: bool,
    pub text: String,
    /// Parses as a (possibly multi-compound) SMILES expression.
    pub valid: bool,
    /// Canonical reactant-set string when valid.
    pub canonical_reactants: Option<String>,
}

/// Ranked candidates for one source, scores non-increasing, no duplicate
/// token sequences, at most `k` entries.
#[derive(Debug, Clone)]
pub struct BeamResult {
    pub hyps: Vec<BeamHypothesis>,
    pub k: usize,
}

struct Live {
    tokens: Vec<usize>,
    score: f64,
    state: DecoderState,
    /// Next-token log-probabilities given the tokens so far.
    next_logprobs: Vec<f64>,
}

struct Candidate {
    seq: Vec<usize>,
    score: f64,
    parent: usize,
    token: usize,
}

/// Length-wise beam expansion from BOS. Hypotheses ending in EOS are
/// finalized; the search stops once `k` are finalized or `max_len` content
/// tokens are reached (survivors are flagged truncated, not dropped).
/// Ranking is by total log-probability with token-id lexicographic
/// tie-breaking. PAD and BOS are never generated.
pub fn beam_search(
    params: &ParameterSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    src: &[usize],
    k: usize,
    max_len: usize,
) -> Result<BeamResult, ModelError> {
    assert!(k >= 1, "beam width must be at least 1");
    assert!(
        max_len + 1 <= cfg.max_seq_len,
        "max_len {max_len} leaves no room inside max_seq_len {}",
        cfg.max_seq_len
    );

    let encoded = encode(params, cfg, src)?;
    let mut root_state = DecoderState::new(params, cfg, &encoded);
    let root_logprobs = decode_step(params, cfg, &mut root_state, BOS)?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        state: root_state,
        next_logprobs: root_logprobs,
    }];
    let mut finished: Vec<(Vec<usize>, f64, bool)> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() || finished.len() >= k {
            break;
        }
        let mut pool: Vec<Candidate> = Vec::with_capacity(live.len() * cfg.vocab_size);
        for (pi, h) in live.iter().enumerate() {
            for tok in 0..cfg.vocab_size {
                if tok == PAD || tok == BOS {
                    continue;
                }
                let mut seq = h.tokens.clone();
                seq.push(tok);
                pool.push(Candidate {
                    seq,
                    score: h.score + h.next_logprobs[tok],
                    parent: pi,
                    token: tok,
                });
            }
        }
        pool.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then_with(|| a.seq.cmp(&b.seq))
        });
        pool.truncate(k);

        let mut next_live = Vec::with_capacity(k);
        for cand in pool {
            if cand.token == EOS {
                finished.push((cand.seq[..cand.seq.len() - 1].to_vec(), cand.score, false));
            } else {
                let mut state = live[cand.parent].state.clone();
                let next_logprobs = decode_step(params, cfg, &mut state, cand.token)?;
                next_live.push(Live {
                    tokens: cand.seq,
                    score: cand.score,
                    state,
                    next_logprobs,
                });
            }
        }
        live = next_live;
    }

    // Survivors at the length limit are kept, flagged as truncated.
    if finished.len() < k {
        for h in live {
            finished.push((h.tokens, h.score, true));
        }
    }
    finished.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(&b.0))
    });
    finished.truncate(k);

    let hyps = finished
        .into_iter()
        .map(|(tokens, score, truncated)| annotate(vocab, tokens, score, truncated))
        .collect();
    Ok(BeamResult { hyps, k })
}

fn annotate(vocab: &Vocabulary, tokens: Vec<usize>, score: f64, truncated: bool) -> BeamHypothesis {
    let text = vocab.decode_text(&tokens);
    let canonical = canonical_reactant_set(&[text.clone()]).ok();
    BeamHypothesis {
        tokens,
        score,
        truncated,
        valid: canonical.is_some(),
        canonical_reactants: canonical,
        text,
    }
}

/// Greedy argmax chain: the beam-width-1 decode. Ties resolve to the lowest
/// token id. Returns the token sequence and whether it was truncated.
pub fn greedy_decode(
    params: &ParameterSet,
    cfg: &ModelConfig,
    src: &[usize],
    max_len: usize,
) -> Result<(Vec<usize>, bool), ModelError> {
    assert!(max_len + 1 <= cfg.max_seq_len);
    let encoded = encode(params, cfg, src)?;
    let mut state = DecoderState::new(params, cfg, &encoded);
    let mut logprobs = decode_step(params, cfg, &mut state, BOS)?;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let mut best = EOS;
        let mut best_lp = f64::NEG_INFINITY;
        for (tok, &lp) in logprobs.iter().enumerate() {
            if tok == PAD || tok == BOS {
                continue;
            }
            if lp > best_lp {
                best_lp = lp;
                best = tok;
            }
        }
        if best == EOS {
            return Ok((tokens, false));
        }
        tokens.push(best);
        logprobs = decode_step(params, cfg, &mut state, best)?;
    }
    Ok((tokens, true))
}
