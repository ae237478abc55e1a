//! `segcurate`: run curation stages from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.

mod augdir;
mod commands;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "segcurate", version, about = "Segment-level curation of robot demonstrations")]
struct Cli {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic mixed-quality dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Split demonstrations at keyframes.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render augmented positive and negative samples from expert demos.
    Augment {
        #[arg(long)]
        expert: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the segment encoder and build the labeled reference set.
    TrainRepr {
        /// Directory written by `augment`.
        #[arg(long)]
        aug: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference embeddings; defaults to `ref.bin` next to `--out`.
        #[arg(long = "ref-out")]
        ref_out: Option<PathBuf>,
    },
    /// Label segments by voting against the reference set.
    Classify {
        /// Dataset the segments refer to.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize and relabel segments (only `-` segments when labels are present).
    Optimize {
        /// Dataset the segments refer to.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline.
    Curate {
        #[arg(long)]
        mixed: Option<PathBuf>,
        #[arg(long)]
        expert: Option<PathBuf>,
        /// Ground truth from `synth`; only used for report metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Re-export a report with its PCA projection and print a summary.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
