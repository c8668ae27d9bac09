//! Product-overlap removal between augment training data and the target
//! corpus. A training product that also appears anywhere in the target
//! corpus would let the model answer test inputs from memory.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, ReactionSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanseReport {
    pub input_count: usize,
    pub removed_count: usize,
    pub output_count: usize,
    /// Distinct canonical products that caused removals, sorted.
    pub removed_products: Vec<String>,
}

impl CleanseReport {
    /// `key: value` lines, one per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("input_count: {}\n", self.input_count));
        out.push_str(&format!("removed_count: {}\n", self.removed_count));
        out.push_str(&format!("output_count: {}\n", self.output_count));
        out.push_str(&format!(
            "removed_products: {}\n",
            self.removed_products.join(" ")
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Drop every augment training sample whose canonical product occurs in any
/// subset of the target corpus. Inputs must already be canonical, which makes
/// the overlap test a plain string join.
pub fn cleanse_overlap(
    augment_train: &[ReactionSample],
    target: &DatasetSplit,
) -> (Vec<ReactionSample>, CleanseReport) {
    let target_products: HashSet<&str> =
        target.all_products().map(|p| p.as_str()).collect();

    let mut kept = Vec::with_capacity(augment_train.len());
    let mut removed_products: Vec<String> = Vec::new();
    for sample in augment_train {
        if target_products.contains(sample.product.as_str()) {
            removed_products.push(sample.product.as_str().to_string());
        } else {
            kept.push(sample.clone());
        }
    }
    let removed_count = removed_products.len();
    removed_products.sort();
    removed_products.dedup();

    let report = CleanseReport {
        input_count: augment_train.len(),
        removed_count,
        output_count: kept.len(),
        removed_products,
    };
    debug_assert_eq!(report.input_count, report.removed_count + report.output_count);
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CorpusRole;

    fn sample(product: &str, reactant: &str) -> ReactionSample {
        ReactionSample::new(product, &[reactant.to_string()], None).unwrap()
    }

    fn target_with_test_product(p: &str) -> DatasetSplit {
        DatasetSplit {
            role: CorpusRole::Target,
            train: vec![],
            val: vec![],
            test: vec![sample(p, "CBr")],
        }
    }

    #[test]
    fn canonical_collision_is_removed() {
        // "OCC" and "CCO" are the same compound after canonicalization.
        let augment = vec![sample("OCC", "CCBr")];
        let target = target_with_test_product("CCO");
        let (kept, report) = cleanse_overlap(&augment, &target);
        assert!(kept.is_empty());
        assert_eq!(report.removed_count, 1);
        assert_eq!(report.removed_products, vec!["CCO".to_string()]);
    }

    #[test]
    fn report_arithmetic() {
        let mut augment = Vec::new();
        for i in 2..9 {
            augment.push(sample(&format!("{}O", "C".repeat(i + 1)), "CBr"));
        }
        augment.push(sample("CCO", "CCBr"));
        augment.push(sample("CCO", "CC(C)Br"));
        augment.push(sample("OCC", "CBr.CO"));
        assert_eq!(augment.len(), 10);
        let target = target_with_test_product("CCO");
        let (kept, report) = cleanse_overlap(&augment, &target);
        assert_eq!(report.input_count, 10);
        assert_eq!(report.removed_count, 3);
        assert_eq!(report.output_count, 7);
        assert_eq!(kept.len(), 7);
        assert_eq!(
            report.input_count,
            report.removed_count + report.output_count
        );
    }

    #[test]
    fn text_report_is_key_value() {
        let (_, report) = cleanse_overlap(&[], &target_with_test_product("CCO"));
        let text = report.to_text();
        assert!(text.contains("input_count: 0"));
        assert!(text.contains("removed_count: 0"));
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed["output_count"], 0);
    }
}
