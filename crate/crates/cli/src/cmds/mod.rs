//! Subcommand implementations. Each returns the process exit code; usage
//! errors print a message and map to exit code 2.

mod build;
mod train_cmd;

pub use train_cmd::{train, TrainArgs};

use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use retroseq::dataset::{
    cleanse_overlap, format_reactions, load_reactions, DatasetSplit, ReactionFileFormat,
};
use retroseq::decode::report::parse_predictions;
use retroseq::decode::{classwise_report, nbest_accuracy, BeamHypothesis, BeamResult};
use retroseq::fsutil::write_atomic;
use retroseq::model::load_checkpoint;
use retroseq::pipeline::run_replay;
use retroseq::smiles::{canonical_reactant_set, canonicalize};

pub(crate) fn usage(msg: &str) -> Result<ExitCode> {
    eprintln!("usage error: {msg}");
    Ok(ExitCode::from(2))
}

pub fn canon(input: &Path, out: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let mut lines = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let canon = canonicalize(line.trim())
            .with_context(|| format!("{}:{}", input.display(), no + 1))?;
        lines.push(canon.into_string());
    }
    let mut body = lines.join("\n");
    body.push('\n');
    write_atomic(out, body.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

pub(crate) fn load_split_dir(dir: &Path, role: retroseq::dataset::CorpusRole) -> Result<DatasetSplit> {
    let part = |name: &str| -> Result<Vec<retroseq::dataset::ReactionSample>> {
        let path = dir.join(name);
        let loaded = load_reactions(&path, ReactionFileFormat::ReactionSmiles)
            .with_context(|| format!("loading {}", path.display()))?;
        if !loaded.malformed.is_empty() {
            eprintln!(
                "note: {} skipped {} malformed line(s), first at line {}",
                path.display(),
                loaded.malformed.len(),
                loaded.malformed[0].0
            );
        }
        Ok(loaded.samples)
    };
    Ok(DatasetSplit {
        role,
        train: part("train.rsmi")?,
        val: part("val.rsmi")?,
        test: part("test.rsmi")?,
    })
}

pub fn cleanse(augment: &Path, target_dir: &Path, out: &Path, report: &Path) -> Result<ExitCode> {
    let augment_loaded = load_reactions(augment, ReactionFileFormat::ReactionSmiles)
        .with_context(|| format!("loading {}", augment.display()))?;
    let target = load_split_dir(target_dir, retroseq::dataset::CorpusRole::Target)?;
    let (kept, rep) = cleanse_overlap(&augment_loaded.samples, &target);
    write_atomic(out, format_reactions(&kept).as_bytes())?;
    write_atomic(report, rep.to_text().as_bytes())?;
    write_atomic(&report.with_extension("json"), rep.to_json().as_bytes())?;
    println!(
        "cleansed: {} in, {} removed, {} out",
        rep.input_count, rep.removed_count, rep.output_count
    );
    Ok(ExitCode::SUCCESS)
}

pub fn synth(config: Option<&Path>, out_dir: &Path) -> Result<ExitCode> {
    let cfg = build::synth_config(config)?;
    let (target, augment) = retroseq::dataset::synth_generate(&cfg)?;
    for (name, split) in [("target", &target), ("augment", &augment)] {
        let dir = out_dir.join(name);
        write_atomic(&dir.join("train.rsmi"), format_reactions(&split.train).as_bytes())?;
        write_atomic(&dir.join("val.rsmi"), format_reactions(&split.val).as_bytes())?;
        write_atomic(&dir.join("test.rsmi"), format_reactions(&split.test).as_bytes())?;
    }
    write_atomic(
        &out_dir.join("synth_config.json"),
        serde_json::to_string_pretty(&cfg)?.as_bytes(),
    )?;
    println!(
        "target {}/{}/{}, augment {}/{}/{} -> {}",
        target.train.len(),
        target.val.len(),
        target.test.len(),
        augment.train.len(),
        augment.val.len(),
        augment.test.len(),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn vocab(inputs: &[std::path::PathBuf], out: &Path) -> Result<ExitCode> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for input in inputs {
        let loaded = load_reactions(input, ReactionFileFormat::ReactionSmiles)
            .with_context(|| format!("loading {}", input.display()))?;
        for s in loaded.samples {
            pairs.push((s.product.into_string(), s.reactants));
        }
    }
    let vocab = retroseq::model::Vocabulary::from_text_pairs(
        pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    write_atomic(out, vocab.to_text_file().as_bytes())?;
    println!("{} tokens -> {}", vocab.size(), out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn decode(
    checkpoint: &Path,
    input: &Path,
    k: usize,
    max_len: Option<usize>,
    out: &Path,
    pseudo_out: Option<&Path>,
) -> Result<ExitCode> {
    if k < 1 {
        return usage("--k must be at least 1");
    }
    let (params, cfg, vocab) = load_checkpoint(checkpoint)?;
    let max_len = max_len.unwrap_or(cfg.max_seq_len - 1);
    if max_len + 1 > cfg.max_seq_len {
        return usage(&format!(
            "--max-len {} exceeds the model limit {}",
            max_len,
            cfg.max_seq_len - 1
        ));
    }
    let gold = load_reactions(input, ReactionFileFormat::ReactionSmiles)
        .with_context(|| format!("loading {}", input.display()))?;
    let results = retroseq::pipeline::decode_test_set(&params, &cfg, &vocab, &gold.samples, k)
        .context("decoding")?;
    write_atomic(
        out,
        retroseq::decode::report::format_predictions(&results).as_bytes(),
    )?;
    if let Some(pseudo_path) = pseudo_out {
        let pseudo: Vec<retroseq::dataset::ReactionSample> = results
            .iter()
            .map(|(beam, g)| {
                let text = beam.hyps.first().map(|h| h.text.clone()).unwrap_or_default();
                retroseq::dataset::ReactionSample::pseudo(g.product.clone(), text)
            })
            .collect();
        write_atomic(pseudo_path, format_reactions(&pseudo).as_bytes())?;
    }
    println!("decoded {} sources with beam {k} -> {}", results.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(pred: &Path, gold: &Path, ns: &str, classwise: bool, out: &Path) -> Result<ExitCode> {
    let ns: Vec<usize> = {
        let mut parsed = Vec::new();
        for part in ns.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.parse::<usize>() {
                Ok(n) if n >= 1 => parsed.push(n),
                _ => return usage(&format!("--ns contains an invalid entry {part:?}")),
            }
        }
        if parsed.is_empty() {
            return usage("--ns must list at least one n");
        }
        parsed
    };

    let blocks = parse_predictions(
        &std::fs::read_to_string(pred).with_context(|| format!("cannot read {}", pred.display()))?,
    )
    .map_err(|e| anyhow::anyhow!("{}: {e}", pred.display()))?;
    let gold_loaded = load_reactions(gold, ReactionFileFormat::ReactionSmiles)
        .with_context(|| format!("loading {}", gold.display()))?;
    if blocks.len() != gold_loaded.samples.len() {
        bail!(
            "{} has {} blocks but {} has {} reactions",
            pred.display(),
            blocks.len(),
            gold.display(),
            gold_loaded.samples.len()
        );
    }

    // Matches are recomputed from candidate text; the file's match column is
    // advisory only.
    let mut results: Vec<(BeamResult, retroseq::dataset::ReactionSample)> = Vec::new();
    for (block, gold_sample) in blocks.iter().zip(&gold_loaded.samples) {
        if block.source != gold_sample.product.as_str() {
            bail!(
                "prediction block source {:?} does not match gold product {:?}",
                block.source,
                gold_sample.product.as_str()
            );
        }
        let hyps: Vec<BeamHypothesis> = block
            .candidates
            .iter()
            .map(|c| {
                let canonical = canonical_reactant_set(&[c.text.clone()]).ok();
                BeamHypothesis {
                    tokens: Vec::new(),
                    score: c.logprob,
                    truncated: false,
                    valid: canonical.is_some(),
                    canonical_reactants: canonical,
                    text: c.text.clone(),
                }
            })
            .collect();
        let k = hyps.len();
        results.push((BeamResult { hyps, k }, gold_sample.clone()));
    }

    let table = nbest_accuracy(&results, &ns)?;
    let mut text = table.to_text();
    let mut csv = table.to_csv();
    if classwise {
        let max_n = *ns.iter().max().expect("non-empty");
        let report = classwise_report(&results, max_n)?;
        text.push('\n');
        text.push_str(&report.to_text());
        csv.push('\n');
        csv.push_str(&report.to_csv());
    }
    write_atomic(out, text.as_bytes())?;
    write_atomic(&out.with_extension("csv"), csv.as_bytes())?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

pub fn curves(run_dir: &Path, out: &Path) -> Result<ExitCode> {
    let path = run_dir.join("curves.csv");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let log = retroseq::trainer::CurveLog::from_csv(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    if !log.iterations_strictly_increasing() {
        bail!("{}: iterations are not strictly increasing", path.display());
    }
    write_atomic(out, log.to_csv().as_bytes())?;
    println!(
        "{} rows, test-eval columns: {}",
        log.rows.len(),
        if log.with_test_eval { "yes" } else { "no" }
    );
    Ok(ExitCode::SUCCESS)
}

pub fn replay(config: Option<&Path>, out_dir: Option<&Path>) -> Result<ExitCode> {
    let cfg = build::replay_config(config, out_dir)?;
    let output = run_replay(&cfg)?;
    print!("{}", output.table.to_text());
    println!("outputs in {}", output.out_dir.display());
    Ok(ExitCode::SUCCESS)
}
