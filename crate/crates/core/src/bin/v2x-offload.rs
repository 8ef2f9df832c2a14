//! Command-line front end: scenario generation, single-scenario solves,
//! figure sweeps, reports and config validation.
//!
//! Errors go to stderr as one JSON object, `{"error":{"code":..,"message":..}}`;
//! the exit code is 2 for invalid input and 1 for anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use v2x_offload::harness::{self, Config, ExperimentId, HarnessError, SimConfig, SweepSpec};
use v2x_offload::scenario::{self, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "v2x-offload", version, about = "Two-tier V2X task offloading simulator")]
struct Cli {
    /// Config file (TOML); the shipped defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario and write it as a JSON snapshot.
    Generate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one scenario through both tiers and print the plan as JSON.
    Solve {
        /// Scenario snapshot; a fresh scenario from `--seed` when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep and write its rows as CSV.
    Sweep {
        /// fig3 ... fig9 or custom.
        #[arg(long)]
        experiment: Option<ExperimentId>,
        /// Sweep spec file (TOML) instead of a standard figure protocol.
        #[arg(long, conflicts_with = "experiment")]
        spec: Option<PathBuf>,
        /// Seeds 1..=N; the config's count when omitted.
        #[arg(long)]
        seeds: Option<u64>,
        /// Explicit comma-separated seed list.
        #[arg(long, value_delimiter = ',', conflicts_with = "seeds")]
        seed: Vec<u64>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Summarize sweep CSVs: mean and standard error per point plus trend
    /// verdicts.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for per-experiment summary CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Exit nonzero when a hard verdict fails.
        #[arg(long)]
        strict: bool,
    },
    /// Check a config file, and optionally a sweep spec, without running.
    Validate {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

/// Error carried to `main` with its exit code.
struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let exit = match e {
            HarnessError::Config(_) | HarnessError::Spec(_) => 2,
            _ => 1,
        };
        Failure {
            code: e.code(),
            message: e.to_string(),
            exit,
        }
    }
}

fn invalid(code: &'static str, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
        exit: 2,
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: "io",
        message: format!("{}: {e}", path.display()),
        exit: 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Failure> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::defaults(),
    };
    Ok(cfg.resolve()?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            }
            fs::write(p, text).map_err(|e| io_failure(p, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn scenario_for(config: &SimConfig, seed: u64) -> Result<Scenario, Failure> {
    let sc = ScenarioConfig {
        seed,
        ..config.scenario.clone()
    };
    scenario::generate(&sc).map_err(|e| invalid("invalid_config", e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate { seed, out } => {
            let sc = scenario_for(&config, seed)?;
            let text = sc.to_json().map_err(|e| invalid("snapshot", e.to_string()))?;
            emit(&text, out.as_deref())
        }
        Command::Solve { scenario, seed, out } => {
            let sc = match scenario {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
                    Scenario::from_json(&text).map_err(|e| invalid("invalid_snapshot", e.to_string()))?
                }
                None => scenario_for(&config, seed)?,
            };
            let plan = harness::solve_scenario(&sc, &config).map_err(|e| invalid("invalid_scenario", e.to_string()))?;
            let text = serde_json::to_string_pretty(&plan).map_err(|e| invalid("serialize", e.to_string()))?;
            emit(&text, out.as_deref())
        }
        Command::Sweep {
            experiment,
            spec,
            seeds,
            seed,
            out_dir,
        } => {
            let seed_list: Vec<u64> = if !seed.is_empty() {
                seed
            } else {
                (1..=seeds.unwrap_or(config.experiments.seeds)).collect()
            };
            let mut sweep = match (experiment, spec) {
                (Some(e), None) => SweepSpec::figure(e, seed_list),
                (None, Some(p)) => {
                    let text = fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
                    let mut s: SweepSpec = toml::from_str(&text).map_err(|e| invalid("invalid_sweep", e.to_string()))?;
                    if s.seeds.is_empty() {
                        s.seeds = seed_list;
                    }
                    s
                }
                _ => return Err(invalid("invalid_sweep", "give --experiment or --spec")),
            };
            let path = sweep
                .output
                .take()
                .unwrap_or_else(|| out_dir.join(format!("{}.csv", sweep.experiment)));
            let rows = harness::run(&sweep, &config)?;
            harness::write_csv_file(&rows, &path)?;
            println!("{}", json!({ "rows": rows.len(), "output": path }));
            Ok(())
        }
        Command::Report {
            inputs,
            out_dir,
            strict,
        } => {
            let mut rows = Vec::new();
            for p in &inputs {
                let file = fs::File::open(p).map_err(|e| io_failure(p, e))?;
                rows.extend(harness::read_csv(file)?);
            }
            if rows.is_empty() {
                return Err(invalid("empty_input", "no rows to report"));
            }
            let report = harness::report(&rows);
            print!("{}", report.render());
            if let Some(dir) = out_dir {
                report.write_data_files(&dir)?;
            }
            if strict && !report.passed() {
                let failed: Vec<&str> = report
                    .verdicts
                    .iter()
                    .filter(|v| v.hard && !v.passed)
                    .map(|v| v.name.as_str())
                    .collect();
                return Err(Failure {
                    code: "verdict_failed",
                    message: format!("failed: {}", failed.join("; ")),
                    exit: 1,
                });
            }
            Ok(())
        }
        Command::Validate { spec } => {
            if let Some(p) = spec {
                let text = fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
                let mut s: SweepSpec = toml::from_str(&text).map_err(|e| invalid("invalid_sweep", e.to_string()))?;
                if s.seeds.is_empty() {
                    s.seeds = config.default_seeds();
                }
                s.validate()?;
            }
            println!("{}", json!({ "valid": true }));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "code": f.code, "message": f.message } }));
            ExitCode::from(f.exit)
        }
    }
}
