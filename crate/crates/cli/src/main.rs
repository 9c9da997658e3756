mod args;
mod commands;
mod error;
mod manifest;
mod render;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Output;
use crate::error::{CliError, CliResult};

fn sidecar(out: &std::path::Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn emit(out: Option<&PathBuf>, output: Output) -> CliResult<()> {
    let manifest = serde_json::to_string_pretty(&output.manifest).expect("manifest serializes");
    for (path, contents) in &output.side_files {
        fs::write(path, contents).map_err(|e| CliError::write(path, e))?;
    }
    match out {
        Some(path) => {
            fs::write(path, &output.body).map_err(|e| CliError::write(path, e))?;
            let m = sidecar(path);
            fs::write(&m, manifest + "\n").map_err(|e| CliError::write(&m, e))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(output.body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(format!("cannot write stdout: {e}")))?;
            // keep stdout reproducible; provenance goes to stderr
            eprintln!("{}", serde_json::to_string(&output.manifest).expect("manifest serializes"));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if !(g.level > 0.0 && g.level < 1.0) {
        return Err(CliError::input("--level must lie strictly between 0 and 1"));
    }
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("cannot start thread pool: {e}")))?;
    }
    let output = match &cli.command {
        Command::Estimate(a) => commands::estimate(g, a)?,
        Command::Simulate(a) => commands::simulate(g, a)?,
        Command::Example(a) => commands::example(g, a)?,
        Command::Validate(a) => commands::validate(g, a)?,
    };
    emit(g.out.as_ref(), output)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
