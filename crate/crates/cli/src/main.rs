//! `corerad run <config.json>` and `corerad list`.

mod config;
mod error;
mod jobs;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{Kind, SCHEMA_VERSION};
use error::CliError;
use output::{commit, config_hash, output_base, Manifest};

#[derive(Parser)]
#[command(name = "corerad", version, about = "Core-radius nonlocal perimeter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// List experiment kinds.
    List,
}

fn run(path: &Path) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config("", format!("cannot read {}: {e}", path.display())))?;
    let cfg = config::parse(&text)?;
    let hash = config_hash(&cfg.raw);
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let out = pool.install(|| jobs::run_job(&cfg.params))?;
    let wall_seconds = clock.elapsed().as_secs_f64();

    let run_name = format!("{}-{}", cfg.kind.name(), &hash[..16]);
    let base = output_base(&cfg.output_dir);
    let dir = commit(&base, &run_name, &out.files, |artifacts| {
        let m = Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            kind: cfg.kind.name(),
            config_hash: &hash,
            started_at,
            wall_seconds,
            threads,
            config: &cfg.raw,
            artifacts,
            summary: &out.summary,
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        Ok(bytes)
    })?;
    match out.failure {
        Some(msg) => Err(CliError::runtime(format!("{msg} (artifacts in {})", dir.display()))),
        None => Ok(dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            println!("schema_version {SCHEMA_VERSION}");
            for k in Kind::ALL {
                println!("{:<20} {}", k.name(), k.description());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config } => match run(&config) {
            Ok(dir) => {
                println!("{}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
