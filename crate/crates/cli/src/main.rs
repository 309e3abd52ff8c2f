use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mirlab::env::{parse_map_name, MapKind};
use mirlab::harness::{
    default_config_text, render_replay, run_experiment, run_selftest, sweep, ExperimentConfig,
    ExperimentReport, MetricTable,
};
use mirlab::mappo::Method;

/// Multi-agent exploration experiments on MiniGrid-style maps.
#[derive(Parser)]
#[command(name = "mirlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train {
        config: PathBuf,
        /// Override a config entry, e.g. `--set train.total_steps=1e5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a config across several methods and maps.
    Sweep {
        config: PathBuf,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        /// Comma-separated map names such as DoorKeyB6x6.
        #[arg(long, value_delimiter = ',', required = true)]
        maps: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the map x method grid of mean best episode reward as CSV.
    Metric {
        dir: PathBuf,
        /// Per-seed rows instead of the grid.
        #[arg(long)]
        details: bool,
    },
    /// Play back a saved episode as ASCII frames.
    Render { replay: PathBuf },
    /// Run the built-in invariant checks.
    Selftest,
    /// Print every config key with its default.
    Defaults,
}

/// Config text with `--set` entries replacing any lines for the same keys.
fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut sets = Vec::new();
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{o}`");
        };
        sets.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut merged = String::new();
    for line in text.lines() {
        let key = line
            .split('#')
            .next()
            .unwrap_or("")
            .split('=')
            .next()
            .unwrap_or("")
            .trim();
        // Blank the line rather than drop it so error line numbers still match the file.
        if !key.is_empty() && sets.iter().any(|(k, _)| k == key) {
            merged.push('\n');
        } else {
            merged.push_str(line);
            merged.push('\n');
        }
    }
    for (k, v) in &sets {
        merged.push_str(&format!("{k} = {v}\n"));
    }
    ExperimentConfig::parse(&merged).with_context(|| format!("in {}", path.display()))
}

fn report(r: &ExperimentReport) -> ExitCode {
    print!("{}", r.metrics().to_csv());
    for f in &r.failures {
        eprintln!(
            "failed: {} {} seed {}: {}",
            f.map, f.method, f.seed, f.error
        );
    }
    if r.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            Ok(report(&run_experiment(&cfg)?))
        }
        Command::Sweep {
            config,
            methods,
            maps,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let methods = methods
                .iter()
                .map(|m| m.trim().parse::<Method>())
                .collect::<Result<Vec<_>, _>>()?;
            let maps = maps
                .iter()
                .map(|m| parse_map_name(m.trim()))
                .collect::<Result<Vec<(MapKind, usize)>, _>>()?;
            Ok(report(&sweep(&cfg, &methods, &maps)?))
        }
        Command::Metric { dir, details } => {
            let table = MetricTable::from_dir(&dir)?;
            if table.rows.is_empty() {
                bail!("no runs found under {}", dir.display());
            }
            if details {
                print!("{}", table.details_csv());
            } else {
                print!("{}", table.to_csv());
            }
            let missing: usize = table.rows.iter().map(|r| r.missing.len()).sum();
            if missing > 0 {
                eprintln!("{missing} seed(s) without a completed run");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Render { replay } => {
            let text = fs::read_to_string(&replay)
                .with_context(|| format!("reading {}", replay.display()))?;
            print!(
                "{}",
                render_replay(&text).with_context(|| format!("in {}", replay.display()))?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let mut ok = true;
            for r in run_selftest() {
                match &r.outcome {
                    Ok(()) => println!("pass  {}", r.name),
                    Err(e) => {
                        ok = false;
                        println!("FAIL  {}: {e}", r.name);
                    }
                }
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Defaults => {
            print!("{}", default_config_text());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
