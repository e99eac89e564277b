mod commands;
mod config;
mod report;
mod source;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EstimateArgs, PatchCheckArgs, ShellingArgs, SweepArgs};
use config::Config;
use report::Failure;

#[derive(Debug, Parser)]
#[command(name = "patchext", version, about = "Broken polynomial extensions on vertex patches")]
struct Cli {
    /// Worker threads for parallel sections, 0 uses all cores [config: threads, default: 0].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with seed, threads, delta and orthogonality_tol; flags take precedence.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check data compatibility and solve the extension problem on one patch.
    PatchCheck(PatchCheckArgs),
    /// Stability ratios against a high-degree proxy, as CSV.
    StabilitySweep(SweepArgs),
    /// Shelling enumeration and colorings of an interior patch, as JSON.
    Shelling(ShellingArgs),
    /// Equilibrated-flux error estimate on a tetrahedral mesh.
    Estimate(EstimateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Config::load(cli.config.as_deref()).and_then(|cfg| {
        let threads = cfg.threads(cli.threads);
        #[cfg(feature = "parallel")]
        if threads > 0 {
            // the global pool can only be configured once per process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        #[cfg(not(feature = "parallel"))]
        let _ = threads;
        match &cli.command {
            Command::PatchCheck(a) => commands::patch_check(a, &cfg),
            Command::StabilitySweep(a) => commands::stability_sweep(a, &cfg),
            Command::Shelling(a) => commands::shelling(a, &cfg),
            Command::Estimate(a) => commands::estimate(a, &cfg),
        }
    });
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(diag)) => {
            eprintln!("{}", serde_json::to_string(&diag).expect("diagnostic serializes"));
            ExitCode::from(1)
        }
    }
}
