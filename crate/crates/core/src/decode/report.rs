//! Predictions file: one block per test sample. The block starts with the
//! source product line, followed by one line per candidate:
//! `rank<TAB>logprob<TAB>candidate<TAB>valid:{0,1}<TAB>match:{0,1}`,
//! and a blank line closes the block.

use super::eval::match_rank;
use super::BeamResult;
use crate::dataset::ReactionSample;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBlock {
    pub source: String,
    pub candidates: Vec<PredictionLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLine {
    pub rank: usize,
    pub logprob: f64,
    pub text: String,
    pub valid: bool,
    pub matched: bool,
}

pub fn format_predictions(results: &[(BeamResult, ReactionSample)]) -> String {
    let mut out = String::new();
    for (beam, gold) in results {
        out.push_str(gold.product.as_str());
        out.push('\n');
        let gold_rank = match_rank(beam, gold);
        for (i, h) in beam.hyps.iter().enumerate() {
            let rank = i + 1;
            let matched = gold_rank == Some(rank);
            out.push_str(&format!(
                "{rank}\t{:.9}\t{}\tvalid:{}\tmatch:{}\n",
                h.score,
                h.text,
                u8::from(h.valid),
                u8::from(matched),
            ));
        }
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionBlock>, String> {
    let mut blocks = Vec::new();
    let mut current: Option<PredictionBlock> = None;
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        if line.is_empty() {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            continue;
        }
        match current.as_mut() {
            None => {
                current = Some(PredictionBlock {
                    source: line.to_string(),
                    candidates: Vec::new(),
                });
            }
            Some(block) => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 5 {
                    return Err(format!("line {line_no}: expected 5 tab-separated fields"));
                }
                let rank: usize = cols[0]
                    .parse()
                    .map_err(|_| format!("line {line_no}: bad rank {:?}", cols[0]))?;
                let logprob: f64 = cols[1]
                    .parse()
                    .map_err(|_| format!("line {line_no}: bad logprob {:?}", cols[1]))?;
                let valid = parse_flag(cols[3], "valid", line_no)?;
                let matched = parse_flag(cols[4], "match", line_no)?;
                block.candidates.push(PredictionLine {
                    rank,
                    logprob,
                    text: cols[2].to_string(),
                    valid,
                    matched,
                });
            }
        }
    }
    if let Some(b) = current.take() {
        blocks.push(b);
    }
    Ok(blocks)
}

fn parse_flag(field: &str, name: &str, line_no: usize) -> Result<bool, String> {
    match field.strip_prefix(&format!("{name}:")) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        _ => Err(format!("line {line_no}: bad {name} field {field:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::BeamHypothesis;
    use crate::smiles::canonical_reactant_set;

    #[test]
    fn roundtrip() {
        let gold = ReactionSample::new("CCO", &["CCBr".to_string()], None).unwrap();
        let mk = |text: &str, score: f64| {
            let canonical = canonical_reactant_set(&[text.to_string()]).ok();
            BeamHypothesis {
                tokens: vec![],
                score,
                truncated: false,
                text: text.to_string(),
                valid: canonical.is_some(),
                canonical_reactants: canonical,
            }
        };
        let beam = BeamResult {
            hyps: vec![mk("CCBr", -0.5), mk("C1CC", -1.25)],
            k: 2,
        };
        let text = format_predictions(&[(beam, gold)]);
        let blocks = parse_predictions(&text).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].source, "CCO");
        assert_eq!(blocks[0].candidates.len(), 2);
        assert!(blocks[0].candidates[0].matched);
        assert!(blocks[0].candidates[0].valid);
        assert!(!blocks[0].candidates[1].valid);
        assert!((blocks[0].candidates[1].logprob + 1.25).abs() < 1e-12);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_predictions("CCO\n1\t-0.5\tX\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }
}
