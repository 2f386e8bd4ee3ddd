//! `llab`: sweeps, verifiers and frozen experiments for doubling-map Schrödinger cocycles.
//!
//! Exit codes: 0 pass, 1 invariant failure (report still written),
//! 2 config error, 3 potential-validation failure.

mod config;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use config::{ConfigError, Lemma, RunConfig};
use llab_core::experiments::{Experiment, ExperimentConfig, GridSpec, GridVar, Outcome, Report};
use llab_core::potential::{validate, PotentialKind};
use output::{config_hash, OutputSet};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const DEFAULT_OUT: &str = "llab-out";
const VALIDATION_SAMPLES: usize = 4096;

#[derive(Parser)]
#[command(name = "llab", version, about = "Lyapunov exponent lab for doubling-map Schrödinger cocycles")]
struct Cli {
    /// Worker threads (default: all cores). LLAB_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Birkhoff exponents over an energy grid, one CSV per coupling plus summary.json.
    LeGrid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Couplings, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Grid minimum, in units of the grid variable.
        #[arg(long, allow_hyphen_values = true)]
        emin: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        emax: Option<f64>,
        #[arg(long)]
        epoints: Option<usize>,
        /// Grid variable: `e` (energy) or `t` (energy / lambda).
        #[arg(long, value_enum)]
        var: Option<VarArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one verifier over a sweep and write its JSON report and CSV table.
    Verify {
        #[arg(value_enum)]
        lemma: Lemma,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        nmax: Option<usize>,
        /// Grid level (forced; disables automatic refinement for critical points).
        #[arg(long = "K")]
        grid_level: Option<u32>,
        #[arg(long)]
        c_target: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a frozen experiment.
    Reproduce {
        /// One of the ids printed by `llab reproduce list`.
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VarArg {
    E,
    T,
}

enum Failure {
    Config(String),
    Potential(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Potential(msg)) => {
            eprintln!("potential validation failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let threads = match std::env::var("LLAB_THREADS") {
        Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| Failure::Config(format!("LLAB_THREADS={s:?}")))?),
        Err(_) => cli.threads,
    };
    match cli.command {
        Command::LeGrid { config, lambda, emin, emax, epoints, var, n, samples, seed, out } => {
            let rc = RunConfig::load(config.as_deref())?;
            let mut c = rc.le_grid();
            if let Some(l) = lambda {
                c.lambdas = l;
            }
            c.grid = GridSpec {
                min: emin.unwrap_or(c.grid.min),
                max: emax.unwrap_or(c.grid.max),
                count: epoints.unwrap_or(c.grid.count),
                var: match var {
                    Some(VarArg::E) => GridVar::E,
                    Some(VarArg::T) => GridVar::T,
                    None => c.grid.var,
                },
            };
            c.n = n.unwrap_or(c.n);
            c.samples = samples.unwrap_or(c.samples);
            c.seed = seed.unwrap_or(c.seed);
            let dir = out.or(rc.out).unwrap_or_else(|| DEFAULT_OUT.into());
            execute(&[ExperimentConfig::LeGrid(c)], &dir, threads)
        }
        Command::Verify { lemma, config, nmax, grid_level, c_target, out } => {
            let mut rc = RunConfig::load(config.as_deref())?;
            rc.n = nmax.or(rc.n);
            rc.grid_level = grid_level.or(rc.grid_level);
            rc.options.c_target = c_target.or(rc.options.c_target);
            let dir = out.or(rc.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
            execute(&[rc.verifier(lemma)?], &dir, threads)
        }
        Command::Reproduce { id, out } => {
            let ids: Vec<&str> = Experiment::ALL.iter().map(|e| e.id()).collect();
            if id == "list" {
                println!("{}", ids.join("\n"));
                return Ok(true);
            }
            let e = Experiment::from_id(&id)
                .ok_or_else(|| Failure::Config(format!("unknown experiment {id:?}; known: {}", ids.join(", "))))?;
            let dir = out.unwrap_or_else(|| Path::new(DEFAULT_OUT).join(e.id()));
            execute(&e.configs(), &dir, threads)
        }
    }
}

fn check_potential(c: &ExperimentConfig) -> Result<(), Failure> {
    let v = c.potential();
    v.check().map_err(|e| Failure::Potential(e.to_string()))?;
    let needs = match c {
        ExperimentConfig::HermanConstant(_) | ExperimentConfig::Submean(_) | ExperimentConfig::HermanFloor(_) => {
            Some(false)
        }
        ExperimentConfig::LeGrid(_) => None,
        _ => Some(true),
    };
    match needs {
        Some(true) if !v.kind.is_monotone() => {
            return Err(Failure::Potential(format!("{} needs a monotone potential", c.name())));
        }
        Some(false) if v.kind != PotentialKind::TrigPolynomial => {
            return Err(Failure::Potential(format!("{} needs a trig-polynomial potential", c.name())));
        }
        _ => {}
    }
    let report = validate(v, VALIDATION_SAMPLES).map_err(|e| Failure::Potential(e.to_string()))?;
    if !report.passed() {
        let names: Vec<&str> = report.violations().map(|c| c.name.as_str()).collect();
        return Err(Failure::Potential(format!("violated: {}", names.join(", "))));
    }
    Ok(())
}

#[derive(Serialize)]
struct Document<'a> {
    check: &'static str,
    passed: bool,
    config: &'a ExperimentConfig,
    report: &'a Report,
}

/// Validates, runs and writes every config; nothing is written unless all runs complete.
fn execute(configs: &[ExperimentConfig], dir: &Path, threads: Option<usize>) -> Result<bool, Failure> {
    for c in configs {
        check_potential(c)?;
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let outcomes: Vec<Outcome> = configs
        .iter()
        .map(|c| c.run().map_err(|e| Failure::Config(format!("{}: {e}", c.name()))))
        .collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    for (c, o) in configs.iter().zip(&outcomes) {
        let mut set = OutputSet::new(dir, config_hash(c));
        let doc = Document { check: c.name(), passed: o.passed, config: c, report: &o.report };
        let name = if matches!(c, ExperimentConfig::LeGrid(_)) { "summary.json".to_string() } else { format!("{}.json", c.name()) };
        set.json(&name, &doc);
        for t in &o.tables {
            set.csv(&t.name, &t.body);
        }
        println!("{:<16} {}", c.name(), if o.passed { "PASS" } else { "FAIL" });
        files.push(set);
    }
    for set in files {
        for p in set.write().map_err(|e| Failure::Config(format!("writing {}: {e}", dir.display())))? {
            println!("  {}", p.display());
        }
    }
    Ok(outcomes.iter().all(|o| o.passed))
}
