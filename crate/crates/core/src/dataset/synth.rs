//! Synthetic desk-scale reaction corpora.
//!
//! Reactions are deterministic string-rewrite templates over a pool of small
//! substituent fragments; the template id doubles as the class label. The
//! target corpus draws from a restricted template subset while the augment
//! corpus draws from the full set, reproducing the skewed-versus-broad
//! distribution relationship of the real corpora at desk scale.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusRole, DatasetError, DatasetSplit, ReactionSample};
use crate::smiles::{canonical_reactant_set, canonicalize};
use crate::util::seed_rng;

pub const TEMPLATE_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        SplitCounts { train, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Template ids the target corpus draws from; must be a subset of
    /// `augment_templates`.
    pub target_templates: Vec<usize>,
    pub augment_templates: Vec<usize>,
    pub target_counts: SplitCounts,
    pub augment_counts: SplitCounts,
    /// Number of substituent fragments to use (capped at the built-in pool).
    pub fragment_pool_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            target_templates: vec![0, 1],
            augment_templates: (0..TEMPLATE_COUNT).collect(),
            target_counts: SplitCounts::new(2000, 250, 250),
            augment_counts: SplitCounts::new(20000, 1000, 1000),
            fragment_pool_size: 96,
            seed: 17,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DatasetError> {
        for &t in self.target_templates.iter().chain(&self.augment_templates) {
            if t >= TEMPLATE_COUNT {
                return Err(DatasetError::Config(format!(
                    "template id {t} out of range (have {TEMPLATE_COUNT})"
                )));
            }
        }
        if self.target_templates.is_empty() || self.augment_templates.is_empty() {
            return Err(DatasetError::Config("empty template set".into()));
        }
        if !self
            .target_templates
            .iter()
            .all(|t| self.augment_templates.contains(t))
        {
            return Err(DatasetError::Config(
                "target templates must be a subset of augment templates".into(),
            ));
        }
        for counts in [&self.target_counts, &self.augment_counts] {
            if counts.train == 0 || counts.val == 0 || counts.test == 0 {
                return Err(DatasetError::Config("split counts must be positive".into()));
            }
        }
        if self.fragment_pool_size < 4 {
            return Err(DatasetError::Config("fragment pool too small".into()));
        }
        Ok(())
    }
}

/// Generate the target and augment corpora described by `cfg`.
/// Byte-identical output for identical configs.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(DatasetSplit, DatasetSplit), DatasetError> {
    cfg.validate()?;
    let pool = fragment_pool(cfg.fragment_pool_size)?;
    let target = build_corpus(
        cfg,
        &pool,
        &cfg.target_templates,
        cfg.target_counts,
        CorpusRole::Target,
    )?;
    let augment = build_corpus(
        cfg,
        &pool,
        &cfg.augment_templates,
        cfg.augment_counts,
        CorpusRole::Augment,
    )?;
    Ok((target, augment))
}

struct Fragment {
    text: &'static str,
    /// Usable where the next atom bonds to the fragment's last atom.
    prefix_ok: bool,
    /// Usable where the previous atom bonds to the fragment's first atom.
    suffix_ok: bool,
}

/// Built-in substituent pool, truncated to `n` entries.
fn fragment_pool(n: usize) -> Result<Vec<&'static Fragment>, DatasetError> {
    const fn frag(text: &'static str, prefix_ok: bool, suffix_ok: bool) -> Fragment {
        Fragment {
            text,
            prefix_ok,
            suffix_ok,
        }
    }
    // Order matters: truncation keeps a mix of short chains, branches,
    // halogenated and aromatic groups at every pool size.
    static POOL: &[Fragment] = &[
        frag("C", true, true),
        frag("CC", true, true),
        frag("c1ccccc1", true, true),
        frag("CCC", true, true),
        frag("CC(C)", true, true),
        frag("FC(F)(F)", true, false),
        frag("CCCC", true, true),
        frag("Cc1ccccc1", true, true),
        frag("CC(C)C", true, true),
        frag("ClCC", true, false),
        frag("CCCCC", true, true),
        frag("c1ccncc1", true, true),
        frag("C(C)(C)", true, true),
        frag("FCC", true, false),
        frag("CCC(C)", true, true),
        frag("CC(C)(C)", true, true),
        frag("Cc1ccc(C)cc1", true, true),
        frag("CCCCCC", true, true),
        frag("CC(F)", true, true),
        frag("c1ccc(F)cc1", true, true),
        frag("CCC(C)C", true, true),
        frag("ClCCC", true, false),
        frag("CC(Cl)", true, true),
        frag("CCc1ccccc1", true, true),
        frag("CC(CC)", true, true),
        frag("c1ccsc1", true, true),
        frag("CCCCCCC", true, true),
        frag("CC(C)CC", true, true),
        frag("FCCC", true, false),
        frag("c1ccc(Cl)cc1", true, true),
        frag("CCCC(C)", true, true),
        frag("CC(C)c1ccccc1", true, true),
        frag("CCCCCCCC", true, true),
        frag("CCC(CC)", true, true),
        frag("FC(F)", true, false),
        frag("Cc1ccccc1", true, true),
        frag("CC(C)CCC", true, true),
        frag("c1ccoc1", true, true),
        frag("CCC(C)(C)", true, true),
        frag("ClC(Cl)", true, false),
        frag("CCCC(C)C", true, true),
        frag("CCc1ccc(C)cc1", true, true),
        frag("CC(C)(C)C", true, true),
        frag("FCCCC", true, false),
        frag("CCCCC(C)", true, true),
        frag("Cc1ccc(F)cc1", true, true),
        frag("CC(C)C(C)", true, true),
        frag("ClCCCC", true, false),
        frag("CCCC(CC)", true, true),
        frag("CCc1ccncc1", true, true),
        frag("CC(C)(CC)", true, true),
        frag("FC(F)(F)C", true, true),
        frag("CCCCCC(C)", true, true),
        frag("Cc1ccc(Cl)cc1", true, true),
        frag("CCC(C)CC", true, true),
        frag("ClCC(C)", true, false),
        frag("CCCCC(C)C", true, true),
        frag("CCCc1ccccc1", true, true),
        frag("CC(C)CC(C)", true, true),
        frag("FCC(C)", true, false),
        frag("CCCCCC(C)C", true, true),
        frag("Cc1ccsc1", true, true),
        frag("CCC(C)C(C)", true, true),
        frag("ClCCCCC", true, false),
        frag("CCCCCCC(C)", true, true),
        frag("CCCCc1ccccc1", true, true),
        frag("CC(C)C(C)C", true, true),
        frag("FCCCCC", true, false),
        frag("CCC(C)(C)C", true, true),
        frag("Cc1ccoc1", true, true),
        frag("CCCC(C)(C)", true, true),
        frag("ClC", true, false),
        frag("CCCCC(CC)", true, true),
        frag("CCc1ccc(F)cc1", true, true),
        frag("CC(C)(C)CC", true, true),
        frag("FC", true, false),
        frag("CCCCCC(CC)", true, true),
        frag("CCc1ccc(Cl)cc1", true, true),
        frag("CCC(C)CC(C)", true, true),
        frag("ClCC(C)C", true, false),
        frag("CCCCCCCC(C)", true, true),
        frag("CCCCCc1ccccc1", true, true),
        frag("CC(C)CCCC", true, true),
        frag("FCC(C)C", true, false),
        frag("CCC(CC)(C)", true, true),
        frag("Cc1ccc(CC)cc1", true, true),
        frag("CCCC(C)CC", true, true),
        frag("ClCCc1ccccc1", true, false),
        frag("CCCCC(C)(C)", true, true),
        frag("CCCc1ccncc1", true, true),
        frag("CC(C)(C)CCC", true, true),
        frag("FCCc1ccccc1", true, false),
        frag("CCCCCC(C)(C)", true, true),
        frag("CCCc1ccc(C)cc1", true, true),
        frag("CCC(C)C(C)C", true, true),
        frag("ClCCCC(C)", true, false),
    ];
    if n > POOL.len() {
        return Err(DatasetError::Config(format!(
            "fragment pool size {n} exceeds available {}",
            POOL.len()
        )));
    }
    Ok(POOL[..n].iter().collect())
}

/// Apply template `id` to substituents `a` (prefix slot) and `b` (suffix
/// slot, unused by unary templates): (product, reactants).
fn apply_template(id: usize, a: &str, b: &str) -> (String, Vec<String>) {
    match id {
        0 => (
            format!("{a}C(=O)O{b}"),
            vec![format!("{a}C(=O)O"), format!("{b}O")],
        ),
        1 => (
            format!("{a}C(=O)N{b}"),
            vec![format!("{a}C(=O)O"), format!("{b}N")],
        ),
        2 => (format!("{a}O{b}"), vec![format!("{a}O"), format!("{b}Br")]),
        3 => (format!("{a}N{b}"), vec![format!("{a}N"), format!("{b}Br")]),
        4 => (format!("{a}S{b}"), vec![format!("{a}S"), format!("{b}Br")]),
        5 => (format!("{a}Cl"), vec![format!("{a}Br")]),
        6 => (
            format!("{a}S(=O)(=O)N{b}"),
            vec![format!("{a}S(=O)(=O)Cl"), format!("{b}N")],
        ),
        7 => (
            format!("{a}OC(=O)N{b}"),
            vec![format!("{a}OC(=O)Cl"), format!("{b}N")],
        ),
        _ => unreachable!("template id out of range"),
    }
}

fn template_is_unary(id: usize) -> bool {
    id == 5
}

pub(crate) fn class_label_for_template(id: usize) -> String {
    format!("RX_{}", id + 1)
}

fn build_corpus(
    cfg: &SynthConfig,
    pool: &[&'static Fragment],
    templates: &[usize],
    counts: SplitCounts,
    role: CorpusRole,
) -> Result<DatasetSplit, DatasetError> {
    let mut sorted_templates = templates.to_vec();
    sorted_templates.sort_unstable();
    sorted_templates.dedup();

    // Full deterministic enumeration, deduplicated on canonical product so
    // each product maps to exactly one reactant set within the corpus.
    let mut seen = std::collections::HashSet::new();
    let mut samples: Vec<ReactionSample> = Vec::new();
    for &t in &sorted_templates {
        for a in pool.iter().filter(|f| f.prefix_ok) {
            if template_is_unary(t) {
                push_sample(t, a.text, "", &mut seen, &mut samples)?;
            } else {
                for b in pool.iter().filter(|f| f.suffix_ok) {
                    push_sample(t, a.text, b.text, &mut seen, &mut samples)?;
                }
            }
        }
    }

    let need = counts.total();
    if samples.len() < need {
        return Err(DatasetError::Config(format!(
            "{} corpus needs {need} samples but templates only yield {}",
            role.name(),
            samples.len()
        )));
    }
    let mut rng = seed_rng(cfg.seed, &format!("synth.{}", role.name()));
    samples.shuffle(&mut rng);
    samples.truncate(need);
    let test = samples.split_off(counts.train + counts.val);
    let val = samples.split_off(counts.train);
    Ok(DatasetSplit {
        role,
        train: samples,
        val,
        test,
    })
}

fn push_sample(
    template: usize,
    a: &str,
    b: &str,
    seen: &mut std::collections::HashSet<String>,
    samples: &mut Vec<ReactionSample>,
) -> Result<(), DatasetError> {
    let (raw_product, raw_reactants) = apply_template(template, a, b);
    let product = canonicalize(&raw_product)?;
    if product.as_str().contains('.') {
        return Err(DatasetError::InvalidSample(format!(
            "template {template} produced a disconnected product {raw_product}"
        )));
    }
    if !seen.insert(product.as_str().to_string()) {
        return Ok(());
    }
    let reactants = canonical_reactant_set(&raw_reactants)?;
    samples.push(ReactionSample {
        product,
        reactants,
        class_label: Some(class_label_for_template(template)),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            target_templates: vec![0, 1],
            augment_templates: vec![0, 1, 2, 3, 4, 5, 6, 7],
            target_counts: SplitCounts::new(60, 10, 10),
            augment_counts: SplitCounts::new(300, 30, 30),
            fragment_pool_size: 24,
            seed: 5,
        }
    }

    #[test]
    fn ester_template_matches_canonical_forms() {
        // Acid fragment "C" and alcohol fragment "CC": acetic acid + ethanol.
        let (product, reactants) = apply_template(0, "C", "CC");
        assert_eq!(product, "CC(=O)OCC");
        let sample = ReactionSample::new(&product, &reactants, None).unwrap();
        assert_eq!(
            sample.product,
            canonicalize("CC(=O)OCC").unwrap()
        );
        assert_eq!(
            sample.reactants,
            canonical_reactant_set(&["CC(=O)O".to_string(), "CCO".to_string()]).unwrap()
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg();
        let (t1, a1) = synth_generate(&cfg).unwrap();
        let (t2, a2) = synth_generate(&cfg).unwrap();
        assert_eq!(t1.train, t2.train);
        assert_eq!(t1.val, t2.val);
        assert_eq!(t1.test, t2.test);
        assert_eq!(a1.train, a2.train);
        assert_eq!(a1.test, a2.test);
    }

    #[test]
    fn target_labels_come_from_target_templates() {
        let (target, augment) = synth_generate(&small_cfg()).unwrap();
        for s in target
            .train
            .iter()
            .chain(target.val.iter())
            .chain(target.test.iter())
        {
            let label = s.class_label.as_deref().unwrap();
            assert!(label == "RX_1" || label == "RX_2", "unexpected {label}");
        }
        let mut augment_labels: Vec<String> = augment
            .train
            .iter()
            .filter_map(|s| s.class_label.clone())
            .collect();
        augment_labels.sort();
        augment_labels.dedup();
        assert!(augment_labels.len() > 2, "augment should span templates");
    }

    #[test]
    fn all_samples_are_canonical_fixed_points() {
        let (target, augment) = synth_generate(&small_cfg()).unwrap();
        for s in target.train.iter().chain(augment.train.iter()).take(100) {
            assert_eq!(
                canonicalize(s.product.as_str()).unwrap().as_str(),
                s.product.as_str()
            );
            let parts: Vec<String> = s.reactants.split('.').map(str::to_string).collect();
            assert_eq!(canonical_reactant_set(&parts).unwrap(), s.reactants);
        }
    }

    #[test]
    fn split_products_unique_within_corpus() {
        let (target, _) = synth_generate(&small_cfg()).unwrap();
        target.check_disjoint().unwrap();
        let mut products: Vec<&str> = target.all_products().map(|p| p.as_str()).collect();
        let before = products.len();
        products.sort();
        products.dedup();
        assert_eq!(products.len(), before, "duplicate product in corpus");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small_cfg();
        cfg.target_templates = vec![9];
        assert!(synth_generate(&cfg).is_err());

        let mut cfg = small_cfg();
        cfg.target_templates = vec![2];
        cfg.augment_templates = vec![0, 1];
        assert!(synth_generate(&cfg).is_err());

        let mut cfg = small_cfg();
        cfg.target_counts = SplitCounts::new(1_000_000, 1, 1);
        assert!(synth_generate(&cfg).is_err());
    }

    #[test]
    fn fragment_pool_strings_are_valid_in_both_positions() {
        for f in fragment_pool(96).unwrap() {
            if f.prefix_ok {
                let s = format!("{}O", f.text);
                canonicalize(&s).unwrap_or_else(|e| panic!("prefix {s}: {e}"));
            }
            if f.suffix_ok {
                let s = format!("O{}", f.text);
                canonicalize(&s).unwrap_or_else(|e| panic!("suffix {s}: {e}"));
            }
        }
    }
}
