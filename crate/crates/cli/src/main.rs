//! `kspace-recon`: simulate, subsample, reconstruct, evaluate and inspect
//! multi-coil k-space from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Command, Failure};

#[derive(Parser, Debug)]
#[command(name = "kspace-recon", version, about = "Parallel MRI reconstruction: GRAPPA and APIR-Net")]
#[command(args_conflicts_with_subcommands = true, arg_required_else_help = true)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "KSPACE_RECON_THREADS", default_value_t = 0)]
    threads: usize,

    /// Replay the run recorded in a manifest.json.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,

    /// Output directory for a replay (default: the recorded one).
    #[arg(long, value_name = "DIR", requires = "manifest")]
    replay_out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Validation(format!("thread pool: {e}")))?;
        let command = match (cli.command, &cli.manifest) {
            (Some(c), None) => c,
            (None, Some(path)) => commands::load_manifest(path, cli.replay_out.as_deref())?,
            _ => return Err(Failure::Validation("give a subcommand or --manifest".into())),
        };
        commands::execute(&command)
    })();
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
