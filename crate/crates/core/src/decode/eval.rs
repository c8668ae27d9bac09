//! n-best accuracy against gold reactant sets.
//!
//! A prediction counts as a hit when it parses and its canonical reactant
//! set equals the gold string. Matching is therefore invariant to reactant
//! order and spelling; invalid SMILES never match.

use std::collections::BTreeMap;

use serde::Serialize;

use super::BeamResult;
use crate::dataset::ReactionSample;
use crate::smiles::canonical_reactant_set;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("beam width {width} narrower than requested n={need}")]
    BeamTooNarrow { width: usize, need: usize },
    #[error("no samples to evaluate")]
    Empty,
}

/// True iff `candidate` parses and its canonical reactant set equals the
/// gold reactants (which are already canonical).
pub fn match_prediction(candidate: &str, gold: &ReactionSample) -> bool {
    match canonical_reactant_set(&[candidate.to_string()]) {
        Ok(canon) => canon == gold.reactants,
        Err(_) => false,
    }
}

/// 1-based rank of the first matching candidate.
pub fn match_rank(beam: &BeamResult, gold: &ReactionSample) -> Option<usize> {
    beam.hyps.iter().position(|h| {
        h.canonical_reactants
            .as_deref()
            .is_some_and(|c| c == gold.reactants)
    }).map(|i| i + 1)
}

/// acc(n) for each requested n: the fraction of samples whose gold reactant
/// set appears among the top-n candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub sample_count: usize,
}

impl AccuracyTable {
    pub fn acc(&self, n: usize) -> Option<f64> {
        self.ns.iter().position(|&m| m == n).map(|i| self.values[i])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples: {}\n", self.sample_count));
        out.push_str(&format!(
            "{:>8} {:>10}\n",
            "n", "accuracy"
        ));
        for (n, v) in self.ns.iter().zip(&self.values) {
            out.push_str(&format!("{n:>8} {v:>10.4}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,accuracy\n");
        for (n, v) in self.ns.iter().zip(&self.values) {
            out.push_str(&format!("{n},{v:.6}\n"));
        }
        out
    }
}

pub fn nbest_accuracy(
    results: &[(BeamResult, ReactionSample)],
    ns: &[usize],
) -> Result<AccuracyTable, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let need = *ns.last().expect("non-empty ns");
    for (beam, _) in results {
        if beam.k < need {
            return Err(EvalError::BeamTooNarrow {
                width: beam.k,
                need,
            });
        }
    }
    let ranks: Vec<Option<usize>> = results
        .iter()
        .map(|(beam, gold)| match_rank(beam, gold))
        .collect();
    let values = ns
        .iter()
        .map(|&n| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= n)).count();
            hits as f64 / results.len() as f64
        })
        .collect();
    Ok(AccuracyTable {
        ns,
        values,
        sample_count: results.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassRow {
    pub label: String,
    pub sample_count: usize,
    pub accuracy: f64,
}

/// Per-class n-best accuracy. Classes are reporting metadata only; samples
/// without a label group under "unlabeled".
#[derive(Debug, Clone, Serialize)]
pub struct ClasswiseReport {
    pub n: usize,
    pub rows: Vec<ClassRow>,
}

impl ClasswiseReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>8} {:>12}\n",
            "class", "samples", format!("{}-best", self.n)
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>8} {:>12.4}\n",
                row.label, row.sample_count, row.accuracy
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,samples,accuracy\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6}\n",
                row.label, row.sample_count, row.accuracy
            ));
        }
        out
    }
}

pub fn classwise_report(
    results: &[(BeamResult, ReactionSample)],
    n: usize,
) -> Result<ClasswiseReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    for (beam, _) in results {
        if beam.k < n {
            return Err(EvalError::BeamTooNarrow { width: beam.k, need: n });
        }
    }
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (beam, gold) in results {
        let label = gold
            .class_label
            .clone()
            .unwrap_or_else(|| "unlabeled".to_string());
        let hit = match_rank(beam, gold).is_some_and(|r| r <= n);
        let entry = groups.entry(label).or_insert((0, 0));
        entry.0 += 1;
        if hit {
            entry.1 += 1;
        }
    }
    let mut rows: Vec<ClassRow> = groups
        .into_iter()
        .map(|(label, (count, hits))| ClassRow {
            label,
            sample_count: count,
            accuracy: hits as f64 / count as f64,
        })
        .collect();
    rows.sort_by(|a, b| class_sort_key(&a.label).cmp(&class_sort_key(&b.label)));
    Ok(ClasswiseReport { n, rows })
}

/// RX_n labels sort numerically, anything else alphabetically after them,
/// "unlabeled" last.
fn class_sort_key(label: &str) -> (u8, u64, String) {
    if label == "unlabeled" {
        return (2, 0, String::new());
    }
    if let Some(rest) = label.strip_prefix("RX_") {
        if let Ok(n) = rest.parse::<u64>() {
            return (0, n, String::new());
        }
    }
    (1, 0, label.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::BeamHypothesis;

    fn gold(product: &str, reactants: &[&str], class: Option<&str>) -> ReactionSample {
        ReactionSample::new(
            product,
            &reactants.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            class.map(str::to_string),
        )
        .unwrap()
    }

    fn beam_of(texts: &[&str], k: usize) -> BeamResult {
        let hyps = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let canonical = canonical_reactant_set(&[t.to_string()]).ok();
                BeamHypothesis {
                    tokens: vec![],
                    score: -(i as f64),
                    truncated: false,
                    text: t.to_string(),
                    valid: canonical.is_some(),
                    canonical_reactants: canonical,
                }
            })
            .collect();
        BeamResult { hyps, k }
    }

    #[test]
    fn match_is_order_invariant() {
        let g = gold("CCOC(C)=O", &["CC(=O)O", "CCO"], None);
        assert!(match_prediction("CCO.CC(=O)O", &g));
        assert!(match_prediction("CC(=O)O.OCC", &g));
        assert!(!match_prediction("CCO", &g));
    }

    #[test]
    fn set_mismatch_and_invalid_do_not_match() {
        let g = gold("CCO", &["CCO", "O"], None);
        assert!(!match_prediction("CCO", &g));
        // Unclosed ring: invalid SMILES.
        assert!(!match_prediction("C1CC", &g));
    }

    #[test]
    fn hand_enumerated_accuracy_fixture() {
        // Gold ranks {1, 3, none, 5}.
        let g = gold("CC", &["CO"], None);
        let make = |rank: Option<usize>| {
            let mut texts = vec!["C1CC"; 6];
            if let Some(r) = rank {
                texts[r - 1] = "CO";
            }
            (beam_of(&texts, 10), g.clone())
        };
        let results = vec![make(Some(1)), make(Some(3)), make(None), make(Some(5))];
        let table = nbest_accuracy(&results, &[1, 3, 5, 10]).unwrap();
        assert_eq!(table.acc(1), Some(0.25));
        assert_eq!(table.acc(3), Some(0.50));
        assert_eq!(table.acc(5), Some(0.75));
        assert_eq!(table.acc(10), Some(0.75));
        // Non-decreasing in n.
        for w in table.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn perfect_predictions_are_one_everywhere() {
        let g = gold("CC", &["CO"], None);
        let results: Vec<_> = (0..3)
            .map(|_| (beam_of(&["CO", "C", "O"], 5), g.clone()))
            .collect();
        let table = nbest_accuracy(&results, &[1, 3, 5]).unwrap();
        assert!(table.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn narrow_beam_rejected() {
        let g = gold("CC", &["CO"], None);
        let results = vec![(beam_of(&["CO"], 3), g)];
        assert!(matches!(
            nbest_accuracy(&results, &[1, 5]),
            Err(EvalError::BeamTooNarrow { width: 3, need: 5 })
        ));
    }

    #[test]
    fn classwise_counts_and_grouping() {
        let g1 = gold("CC", &["CO"], Some("RX_2"));
        let g2 = gold("CCC", &["CCO"], Some("RX_2"));
        let g3 = gold("CCCC", &["CCCO"], Some("RX_2"));
        let g4 = gold("CN", &["CO"], None);
        let results = vec![
            (beam_of(&["CO"], 5), g1),
            (beam_of(&["CCO"], 5), g2),
            (beam_of(&["C"], 5), g3),
            (beam_of(&["C1CC"], 5), g4),
        ];
        let report = classwise_report(&results, 1).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].label, "RX_2");
        assert_eq!(report.rows[0].sample_count, 3);
        assert!((report.rows[0].accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.rows[1].label, "unlabeled");
        assert_eq!(report.rows[1].sample_count, 1);
        let total: usize = report.rows.iter().map(|r| r.sample_count).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn rx_labels_sort_numerically() {
        assert!(class_sort_key("RX_2") < class_sort_key("RX_10"));
        assert!(class_sort_key("RX_10") < class_sort_key("other"));
        assert!(class_sort_key("other") < class_sort_key("unlabeled"));
    }

    #[test]
    fn all_class_rows_single_class_full_accuracy() {
        let g = gold("CC", &["CO"], Some("RX_2"));
        let results: Vec<_> = (0..4)
            .map(|_| (beam_of(&["CO"], 3), g.clone()))
            .collect();
        let report = classwise_report(&results, 1).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].accuracy, 1.0);
    }
}
