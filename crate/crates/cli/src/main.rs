//! `crsense` command-line front end.

mod svg;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crsense::config::Override;
use crsense::experiment::{run_preset, run_scenario, write_csv, CsvRow, Preset, RunOptions, PRESET_NAMES};
use crsense::{Error, ScenarioConfig};

#[derive(Parser)]
#[command(name = "crsense", version, about = "CSI-aided myopic sensing Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a figure preset or a scenario file and write CSV results.
    Run(RunArgs),
    /// Check a scenario file and list every violated invariant.
    Validate {
        file: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name (fig3, fig5, fig6, fig7, fig8).
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario file in TOML.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `fading.a=0.12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Also write an SVG line plot next to the CSV.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { file } => validate(&file),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnknownKeys(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(args: RunArgs) -> crsense::Result<ExitCode> {
    let overrides = args.set.iter().map(|s| Override::parse(s)).collect::<crsense::Result<Vec<_>>>()?;
    let opts = RunOptions {
        overrides,
        seed: args.seed,
        replications: args.replications,
        ..RunOptions::default()
    };
    let (name, rows) = match (&args.preset, &args.config) {
        (Some(name), None) => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                return Err(Error::Usage(format!(
                    "unknown preset '{name}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )));
            }
            let preset = Preset::by_name(name)?;
            (name.clone(), run_preset(&preset, &opts)?)
        }
        (None, Some(path)) => {
            let config = ScenarioConfig::from_file(path, &[])?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
            (stem, run_scenario(&config, &opts)?)
        }
        _ => return Err(Error::Usage("give exactly one of a preset name or --config FILE".into())),
    };

    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join(format!("{name}.csv"));
    write_csv(&rows, BufWriter::new(File::create(&csv_path)?))?;
    println!("wrote {}", csv_path.display());
    if args.svg {
        let svg_path = args.out.join(format!("{name}.svg"));
        std::fs::write(&svg_path, svg::plot(&name, &rows))?;
        println!("wrote {}", svg_path.display());
    }
    print_summary(&rows);
    Ok(ExitCode::SUCCESS)
}

fn validate(path: &Path) -> crsense::Result<ExitCode> {
    let config = match ScenarioConfig::from_file(path, &[]) {
        Ok(c) => c,
        Err(Error::UnknownKeys(keys)) => {
            for k in keys {
                println!("{k}: unknown key");
            }
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e),
    };
    let violations = config.violations();
    if violations.is_empty() {
        println!("{}: valid", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    for (key, msg) in &violations {
        println!("{key}: {msg}");
    }
    Ok(ExitCode::from(1))
}

/// Prints sweep rows as they are and collapses a time series to its last slot.
fn print_summary(rows: &[CsvRow]) {
    let last_slot = rows
        .iter()
        .filter(|r| r.sweep_var == "slot")
        .map(|r| r.sweep_value)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{:<12} {:>10} {:<18} {:<20} {:>10} {:>10}",
        "sweep_var", "value", "strategy", "metric", "mean", "stderr"
    );
    for r in rows.iter().filter(|r| r.sweep_var != "slot" || r.sweep_value == last_slot) {
        println!(
            "{:<12} {:>10} {:<18} {:<20} {:>10.4} {:>10.4}",
            r.sweep_var, r.sweep_value, r.strategy, r.metric, r.mean, r.stderr
        );
    }
}
