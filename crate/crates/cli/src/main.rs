mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mdslab", version, about = "FMCW radar micro-Doppler simulation, classification and explanation")]
pub struct Cli {
    /// Run configuration file, or `default` for the built-in one. When
    /// omitted, `run.cfg` in the input directory is used if present.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MDSLAB_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a labeled dataset of ADC cubes.
    Simulate,
    /// Detect the strongest target per sample and crop it.
    Process {
        /// Directory holding a `simulate` run (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Spectrograms of the cropped cubes.
    Mds {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Bin written as the PGM preview (defaults to the most energetic bin).
        #[arg(long)]
        preview_bin: Option<usize>,
    },
    /// Cross-validated training on the spectrograms.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Scores a checkpoint on every spectrogram in the input directory.
    Eval {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Defaults to `checkpoint.tensor` in the input directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Grad-CAM overlay for one sample.
    Explain {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Target class (defaults to the predicted one).
        #[arg(long)]
        class: Option<usize>,
        /// One-based block index (defaults to the last block).
        #[arg(long)]
        block: Option<usize>,
        /// Also export the raw attention each token receives.
        #[arg(long)]
        attention: bool,
    },
    /// Print the axis resolutions and limits of the radar configuration.
    Axes,
    /// Run the built-in oracle checks and a small end-to-end pipeline.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
