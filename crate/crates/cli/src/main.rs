use std::path::PathBuf;
use std::process;

use bpire_cli::{run, ExitCode, Overrides};
use clap::Parser;

/// Branching processes with immigration in a random environment: simulation
/// and Monte Carlo checks of the log-population CLT.
#[derive(Debug, Parser)]
#[command(name = "bpire", version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides master_seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks automatically.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::BadConfig.code() } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    let overrides = Overrides { seed: args.seed, threads: args.threads };
    match run(&args.config, &args.out, overrides) {
        Ok(report) => {
            print!("{}", report.summary);
            for n in &report.notes {
                eprintln!("inconclusive: {n}");
            }
            process::exit(report.exit.code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code().code());
        }
    }
}
