//! Line-oriented reaction file ingestion.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{DatasetError, ReactionSample};

/// Accepted on-disk layouts. Only one exists today; the choice is explicit at
/// call sites so new layouts slot in without signature changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionFileFormat {
    /// `reactants>>product` or `reactants>reagents>product`, optional
    /// tab-separated class label.
    ReactionSmiles,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Loading fails once more than this fraction of lines is malformed.
    /// The corpora are noisy OCR scans; isolated bad lines are expected.
    pub max_malformed_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_malformed_fraction: 0.05,
        }
    }
}

#[derive(Debug)]
pub struct LoadedReactions {
    pub samples: Vec<ReactionSample>,
    /// (1-based line number, reason) for each skipped line.
    pub malformed: Vec<(usize, String)>,
}

pub fn load_reactions(
    path: &Path,
    format: ReactionFileFormat,
) -> Result<LoadedReactions, DatasetError> {
    load_reactions_with(path, format, &LoadOptions::default())
}

pub fn load_reactions_with(
    path: &Path,
    format: ReactionFileFormat,
    opts: &LoadOptions,
) -> Result<LoadedReactions, DatasetError> {
    let ReactionFileFormat::ReactionSmiles = format;
    let text = fs::read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    // Per-line parsing is independent; results merge back in input order.
    let parsed: Vec<(usize, Result<ReactionSample, String>)> = lines
        .par_iter()
        .map(|&(no, line)| (no, parse_line(line)))
        .collect();

    let mut samples = Vec::new();
    let mut malformed = Vec::new();
    for (no, res) in parsed {
        match res {
            Ok(s) => samples.push(s),
            Err(reason) => malformed.push((no, reason)),
        }
    }

    let total = lines.len();
    if total > 0 && (malformed.len() as f64) > opts.max_malformed_fraction * total as f64 {
        let first = malformed
            .first()
            .map(|(no, r)| format!("line {no}: {r}"))
            .unwrap_or_default();
        return Err(DatasetError::Format {
            path: path.display().to_string(),
            malformed: malformed.len(),
            total,
            limit: opts.max_malformed_fraction * 100.0,
            first,
        });
    }
    Ok(LoadedReactions { samples, malformed })
}

/// Render one sample as a reaction file line.
pub fn reaction_line(sample: &ReactionSample) -> String {
    match &sample.class_label {
        Some(c) => format!("{}>>{}\t{}", sample.reactants, sample.product, c),
        None => format!("{}>>{}", sample.reactants, sample.product),
    }
}

/// Serialize samples in the reaction file format, one per line.
pub fn format_reactions(samples: &[ReactionSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&reaction_line(s));
        out.push('\n');
    }
    out
}

/// Load pseudo-labeled reactions: the product side is canonicalized, the
/// reactant side is kept verbatim (decoded model text need not parse).
pub fn load_pseudo_reactions(path: &Path) -> Result<Vec<ReactionSample>, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let reaction = line.split('\t').next().unwrap_or_default();
        let parts: Vec<&str> = reaction.split('>').collect();
        let (reactants, product) = match parts.as_slice() {
            [r, _, p] => (*r, *p),
            _ => {
                return Err(DatasetError::InvalidSample(format!(
                    "pseudo file line {}: expected reactants>>product",
                    no + 1
                )))
            }
        };
        let product = crate::smiles::canonicalize(product)?;
        samples.push(ReactionSample::pseudo(product, reactants.to_string()));
    }
    Ok(samples)
}

fn parse_line(line: &str) -> Result<ReactionSample, String> {
    let mut cols = line.split('\t');
    let reaction = cols.next().unwrap_or_default();
    let class_label = match cols.next() {
        Some(c) if !c.trim().is_empty() => Some(c.trim().to_string()),
        _ => None,
    };
    if cols.next().is_some() {
        return Err("more than two tab-separated columns".into());
    }

    let parts: Vec<&str> = reaction.split('>').collect();
    let (reactants, product) = match parts.as_slice() {
        [r, "", p] => (*r, *p),
        // Middle field holds reagents; the samples are (product, reactants)
        // pairs, so reagents are dropped.
        [r, _reagents, p] => (*r, *p),
        _ => return Err("expected reactants>>product or reactants>reagents>product".into()),
    };
    if reactants.is_empty() || product.is_empty() {
        return Err("empty reactant or product field".into());
    }
    let reactant_parts: Vec<String> = reactants.split('.').map(str::to_string).collect();
    ReactionSample::new(product, &reactant_parts, class_label).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_example_line() {
        let f = write_file("CC(=O)O.OCC>>CCOC(C)=O\tRX_2\n");
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert_eq!(loaded.samples.len(), 1);
        assert_eq!(loaded.malformed.len(), 0);
        let s = &loaded.samples[0];
        // Both sides are stored canonicalized.
        let expected = crate::smiles::canonical_reactant_set(&[
            "CC(=O)O".to_string(),
            "CCO".to_string(),
        ])
        .unwrap();
        assert_eq!(s.reactants, expected);
        assert_eq!(s.class_label.as_deref(), Some("RX_2"));
        assert_eq!(
            s.product,
            crate::smiles::canonicalize("CCOC(C)=O").unwrap()
        );
    }

    #[test]
    fn loader_does_not_judge_self_identical_reactions() {
        let f = write_file("CCO>>CCO\n");
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert_eq!(loaded.samples.len(), 1);
        assert_eq!(loaded.samples[0].product.as_str(), "CCO");
        assert_eq!(loaded.samples[0].reactants, "CCO");
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write_file("");
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert!(loaded.samples.is_empty());
        assert!(loaded.malformed.is_empty());
    }

    #[test]
    fn reagents_are_discarded() {
        let f = write_file("CCBr.CCO>[Na+].[OH-]>CCOCC\n");
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        let expected = crate::smiles::canonical_reactant_set(&[
            "CCBr".to_string(),
            "CCO".to_string(),
        ])
        .unwrap();
        assert_eq!(loaded.samples[0].reactants, expected);
        assert!(!loaded.samples[0].reactants.contains("Na"));
        assert_eq!(loaded.samples[0].product.as_str(), "CCOCC");
    }

    #[test]
    fn atom_maps_stripped_on_load() {
        let f = write_file("[CH3:1][OH:2]>>[CH3:1][CH3:4]\n");
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert_eq!(loaded.samples[0].product.as_str(), "CC");
        assert_eq!(loaded.samples[0].reactants, "CO");
    }

    #[test]
    fn malformed_lines_collected_with_numbers() {
        let f = write_file("CCO>>CC\nnot a reaction\nC1CC>>C\nCC>>CC\n");
        let opts = LoadOptions {
            max_malformed_fraction: 0.9,
        };
        let loaded =
            load_reactions_with(f.path(), ReactionFileFormat::ReactionSmiles, &opts).unwrap();
        assert_eq!(loaded.samples.len(), 2);
        let lines: Vec<usize> = loaded.malformed.iter().map(|&(no, _)| no).collect();
        assert_eq!(lines, vec![2, 3]);
    }

    #[test]
    fn too_many_malformed_lines_fail() {
        let f = write_file("junk\nmore junk\nCCO>>CC\n");
        let err = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap_err();
        assert!(matches!(err, DatasetError::Format { malformed: 2, .. }));
    }

    #[test]
    fn reaction_file_roundtrip() {
        let samples = vec![
            ReactionSample::new("CCO", &["CCBr".to_string()], Some("RX_6".to_string())).unwrap(),
            ReactionSample::new(
                "CCOC(C)=O",
                &["CC(=O)O".to_string(), "CCO".to_string()],
                None,
            )
            .unwrap(),
        ];
        let text = format_reactions(&samples);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let loaded = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert_eq!(loaded.samples, samples);
    }

    #[test]
    fn pseudo_loader_keeps_reactants_verbatim() {
        let f = write_file("C1CC(not-even-smiles>>CCO\nCCBr>>CCF\n");
        let samples = load_pseudo_reactions(f.path()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].product.as_str(), "CCO");
        assert_eq!(samples[0].reactants, "C1CC(not-even-smiles");
        assert_eq!(samples[1].reactants, "CCBr");
    }

    #[test]
    fn load_is_deterministic() {
        let f = write_file("CC(=O)O.OCC>>CCOC(C)=O\nCCBr>>CCCl\n");
        let a = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        let b = load_reactions(f.path(), ReactionFileFormat::ReactionSmiles).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
