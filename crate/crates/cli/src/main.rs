use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rpg_cli::config::load_config;
use rpg_cli::metrics_log::read_log;
use rpg_cli::report::{fraction_table, write_plots};
use rpg_cli::train::train;
use rpg_cli::verify::{render, run_suites, select, thread_count};
use rpg_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "rpg", version, about = "Metric-regularized policy gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the oracle and property suites.
    Verify {
        /// Run only this suite.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Train from a configuration file.
    Train {
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the metrics log, summary and checkpoint.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Summarize metrics logs and plot them.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Directory for SVG charts.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn verify(suite: Option<&str>) -> CliResult<bool> {
    let suites = select(suite)?;
    let reports = run_suites(&suites, thread_count());
    print!("{}", render(&reports));
    Ok(reports.iter().all(|r| r.passed()))
}

fn run_train(config: &Path, seed: Option<u64>, out: &Path) -> CliResult<bool> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let result = train(&cfg, out)?;
    let s = &result.summary;
    println!("updates {}  final return {:.6}  best return {:.6}  ratio<1 {:.2}", s.updates, s.final_return, s.best_return, s.ratio_below_one);
    if let (Some(c), Some(o)) = (s.final_cost, s.optimal_cost) {
        println!("expected cost {c:.6}  optimal {o:.6}  gap {:.3}%", 100.0 * (c / o - 1.0));
    }
    for f in &result.files {
        println!("wrote {}", f.display());
    }
    if let Some(reason) = &s.aborted {
        eprintln!("training aborted: {reason}");
        return Ok(false);
    }
    Ok(true)
}

/// Run label: the file stem, or the parent directory for the default log name.
fn run_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "metrics" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

fn report(logs: &[PathBuf], plot: Option<&Path>) -> CliResult<bool> {
    let mut runs: Vec<(String, _)> = Vec::new();
    for path in logs {
        let mut name = run_name(path);
        if runs.iter().any(|(n, _)| *n == name) {
            name = format!("{name}_{}", runs.len() + 1);
        }
        runs.push((name, read_log(path)?));
    }
    print!("{}", fraction_table(&runs));
    if let Some(dir) = plot {
        for f in write_plots(&runs, dir)? {
            println!("wrote {}", f.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify { suite } => verify(suite.as_deref()),
        Command::Train { config, seed, out } => run_train(config, *seed, out),
        Command::Report { logs, plot } => report(logs, plot.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::UnknownSuite(_) = e {
                let names: Vec<&str> = rpg_cli::verify::SUITES.iter().map(|s| s.name).collect();
                eprintln!("available suites: {}", names.join(", "));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
