//! retroseq: data-transfer training experiments for seq2seq retrosynthesis.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod cmds;
mod kvcfg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "retroseq",
    about = "Desk-scale data-transfer training for seq2seq retrosynthesis",
    version
)]
struct Cli {
    /// Cap worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize SMILES, one per line, output line-aligned.
    Canon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove augment training reactions whose product occurs in the target corpus.
    Cleanse {
        /// Augment training reactions (.rsmi).
        #[arg(long)]
        augment: PathBuf,
        /// Directory holding target train.rsmi, val.rsmi, test.rsmi.
        #[arg(long)]
        target_dir: PathBuf,
        /// Cleansed reactions output.
        #[arg(long)]
        out: PathBuf,
        /// Report path; a .json twin is written next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate the synthetic target/augment corpora.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build a token vocabulary from reaction files.
    Vocab {
        /// Reaction files; repeatable.
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model under a strategy.
    Train {
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        target_dir: Option<PathBuf>,
        #[arg(long)]
        augment_dir: Option<PathBuf>,
        /// Pseudo-labeled reactions for --strategy self.
        #[arg(long)]
        pseudo_file: Option<PathBuf>,
        /// Pre-trained checkpoint for --strategy finetune.
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config iteration budget.
        #[arg(long)]
        iters: Option<u64>,
    },
    /// Beam-decode a reaction file with a trained checkpoint.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Maximum generated tokens (default: model limit minus one).
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write rank-1 decodes as a pseudo-label reaction file.
        #[arg(long)]
        pseudo_out: Option<PathBuf>,
    },
    /// Score a predictions file against gold reactions.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Comma-separated n values.
        #[arg(long, default_value = "1,3,5,10,20,50")]
        ns: String,
        #[arg(long)]
        classwise: bool,
        /// Text table path; a .csv twin is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and re-emit a run's curves CSV.
    Curves {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-shot strategy comparison: synth, cleanse, train all four
    /// regimes over the seeds, evaluate, and emit the comparison table.
    Replay {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Canon { input, out } => cmds::canon(&input, &out),
        Command::Cleanse {
            augment,
            target_dir,
            out,
            report,
        } => cmds::cleanse(&augment, &target_dir, &out, &report),
        Command::Synth { config, out_dir } => cmds::synth(config.as_deref(), &out_dir),
        Command::Vocab { inputs, out } => cmds::vocab(&inputs, &out),
        Command::Train {
            strategy,
            target_dir,
            augment_dir,
            pseudo_file,
            init_checkpoint,
            out_dir,
            config,
            seed,
            iters,
        } => cmds::train(cmds::TrainArgs {
            strategy,
            target_dir,
            augment_dir,
            pseudo_file,
            init_checkpoint,
            out_dir,
            config,
            seed,
            iters,
        }),
        Command::Decode {
            checkpoint,
            input,
            k,
            max_len,
            out,
            pseudo_out,
        } => cmds::decode(&checkpoint, &input, k, max_len, &out, pseudo_out.as_deref()),
        Command::Eval {
            pred,
            gold,
            ns,
            classwise,
            out,
        } => cmds::eval(&pred, &gold, &ns, classwise, &out),
        Command::Curves { run_dir, out } => cmds::curves(&run_dir, &out),
        Command::Replay { config, out_dir } => cmds::replay(config.as_deref(), out_dir.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
