use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use kslab::harness::{compare_golden, parse_config, preset_scenario, run_batch, GoldenTolerances, HarnessError, Scenario, PRESETS};

#[derive(Parser)]
#[command(name = "kslab", version, about = "Keller-Segel and gradient-flow experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios from a config file and/or named presets.
    Run {
        /// TOML file with [scenario.NAME] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset to run (repeatable).
        #[arg(long)]
        preset: Vec<String>,
        /// Output root; each scenario writes to its own subdirectory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in presets.
    ListPresets {
        /// Also print each preset's TOML body.
        #[arg(long)]
        verbose: bool,
    },
    /// Compare an artifact directory against goldens.
    Compare {
        artifacts: PathBuf,
        golden: PathBuf,
        /// TOML file with [default] and [columns] tolerances.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn collect(config: Option<PathBuf>, presets: &[String], seed: Option<u64>) -> Result<Vec<Scenario>, HarnessError> {
    let mut batch = match config {
        Some(path) => parse_config(&path)?,
        None => vec![],
    };
    for p in presets {
        batch.push(preset_scenario(p)?);
    }
    if batch.is_empty() {
        return Err(HarnessError::Config { line: None, message: "nothing to run: pass --config or --preset".into() });
    }
    let mut names = std::collections::BTreeSet::new();
    for s in &batch {
        if !names.insert(s.out_dir.clone()) {
            return Err(HarnessError::Config { line: None, message: format!("duplicate scenario output `{}`", s.out_dir.display()) });
        }
    }
    if let Some(seed) = seed {
        for s in &mut batch {
            s.seed = seed;
        }
    }
    Ok(batch)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, preset, out, seed } => {
            let batch = match collect(config, &preset, seed) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let start = Instant::now();
            let mut failed = false;
            for (name, result) in run_batch(&batch, &out) {
                match result {
                    Ok(o) if o.passed() => println!("PASS {name} -> {}", o.directory.display()),
                    Ok(o) => {
                        failed = true;
                        println!("FAIL {name}: checks {} -> {}", o.failed_checks().join(", "), o.directory.display());
                    }
                    Err(e) => {
                        failed = true;
                        println!("FAIL {name}: {e}");
                    }
                }
            }
            eprintln!("{} scenario(s) in {:.2}s", batch.len(), start.elapsed().as_secs_f64());
            if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::ListPresets { verbose } => {
            for p in PRESETS {
                println!("{:<18} {:>4}s  {}", p.name, p.budget_seconds, p.description);
                if verbose {
                    for line in p.body.trim().lines() {
                        println!("    {line}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Compare { artifacts, golden, config } => {
            let tol = match config.map(|p| std::fs::read_to_string(&p).map_err(|e| (p, e))) {
                None => Ok(GoldenTolerances::default()),
                Some(Ok(text)) => GoldenTolerances::from_toml(&text),
                Some(Err((p, e))) => Err(HarnessError::Config { line: None, message: format!("{}: {e}", p.display()) }),
            };
            let tol = match tol {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            match compare_golden(&artifacts, &golden, &tol) {
                Ok(report) => {
                    for m in &report.mismatches {
                        println!("MISMATCH {m}");
                    }
                    println!(
                        "{}: {} file(s), {} mismatch(es)",
                        if report.passed() { "PASS" } else { "FAIL" },
                        report.files_compared,
                        report.mismatches.len()
                    );
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
