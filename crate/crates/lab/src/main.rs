use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stairtree_lab::{run, Backend, Command, LabError};

#[derive(Parser)]
#[command(name = "stairtree", version, about = "Run staircase and wind-tree experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Rational)]
    backend: Backend,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(hash) => {
            println!("{hash}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<String, LabError> {
    let config = cli.config.as_ref().ok_or_else(|| LabError::InvalidConfig("--config is required".into()))?;
    let out = cli.out.as_ref().ok_or_else(|| LabError::InvalidConfig("--out is required".into()))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::InvalidConfig(format!("threads: {e}")))?;
    }
    let text = std::fs::read_to_string(config)?;
    run(cli.command, &text, out, cli.backend, cli.threads)
}
