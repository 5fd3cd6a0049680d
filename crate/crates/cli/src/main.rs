use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use genvtest_cli::config::{RunConfig, Settings, SEED_ENV};
use genvtest_cli::run::{run_with_workers, write_artifacts, y_label};
use genvtest_cli::CliError;

/// Monte Carlo global envelope tests for curves and point patterns.
#[derive(Parser)]
#[command(name = "genvtest", version)]
struct Cli {
    /// TOML file with the same keys as the flags (snake_case); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Settings::from_toml_file(path)?,
        None => Settings::default(),
    };
    let settings = cli.settings.over(file).with_env_seed(std::env::var(SEED_ENV).ok())?;
    let cfg = RunConfig::resolve(settings)?;
    let outcome = run_with_workers(&cfg)?;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    for path in write_artifacts(&outcome, &cfg.out_dir, &y_label(&cfg))? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
