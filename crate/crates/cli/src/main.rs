mod args;
mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use args::*;

#[derive(Debug, Parser)]
#[command(name = "se2lab", version, about = "Resolvent kernels of diffusions on SE(2)")]
struct Cli {
    /// worker threads (default: SE2LAB_THREADS, else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// compute one kernel: SKF field, PGM marginal, JSON manifest
    Kernel(KernelArgs),
    /// relative-error table of methods against a reference (CSV)
    Compare(CompareArgs),
    /// stochastic completion field between two oriented points
    CompletionField(CompletionArgs),
    /// orientation-score transform, reconstruction and enhancement
    Oscore {
        #[command(subcommand)]
        cmd: OscoreCommand,
    },
    /// Mathieu function tables
    Mathieu {
        #[command(subcommand)]
        cmd: MathieuCommand,
    },
    /// exact frequency kernel against its asymptotic forms (CSV)
    Asymptotics(AsymptoticsArgs),
    /// repeat the run recorded in a manifest
    Rerun {
        manifest: String,
        /// replacement output path or prefix
        #[arg(long)]
        out: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| std::env::var("SE2LAB_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads.filter(|&n| n > 0) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
