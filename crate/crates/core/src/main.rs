use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use mcf_avoid::oracle::{oracle, OracleKind};
use mcf_avoid::scenario::{read_config, run_scenario, ScenarioConfig, ScenarioOutcome};
use mcf_avoid::{Error, Result};

/// Mean curvature flow of planar sets and the distance between them.
#[derive(Parser)]
#[command(name = "mcf-avoid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run every `*.toml` scenario in a directory.
    Suite {
        dir: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print closed-form or ODE reference values as JSON.
    Oracle {
        /// euclid_circle, hyperbolic_circle, annulus_harmonic or exp_offset
        kind: String,
        #[arg(allow_negative_numbers = true)]
        params: Vec<f64>,
        /// Comma-separated times (radii for annulus_harmonic).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0")]
        at: Vec<f64>,
    },
}

#[derive(Args, Clone)]
struct RunOpts {
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output root; each scenario writes to `<out>/<name>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

impl RunOpts {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<()> {
        if let Some(n) = self.grid_n {
            config.grid.n = n;
        }
        if let Some(t) = self.t_end {
            // recorded times are rescaled to the new horizon
            let old = config.flow.t_end;
            config.flow.t_end = t;
            for r in &mut config.flow.records {
                *r = *r / old * t;
            }
        }
        if let Some(tol) = self.tolerance {
            config.report.tolerance = Some(tol);
        }
        config.setup().map(|_| ())
    }
}

fn run_one(path: &Path, opts: &RunOpts) -> Result<ScenarioOutcome> {
    let mut config = read_config(path)?;
    opts.apply(&mut config)?;
    let dir = opts.out.join(&config.scenario.name);
    run_scenario(&config, Some(&dir))
}

fn report(outcome: &Result<ScenarioOutcome>, path: &Path, quiet: bool) -> bool {
    match outcome {
        Ok(o) => {
            if !quiet || !o.success() {
                println!("{}", o.summary());
            }
            o.success()
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            false
        }
    }
}

fn suite(dir: &Path, opts: &RunOpts) -> Result<bool> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let results: Vec<_> = files.par_iter().map(|p| (p, run_one(p, opts))).collect();
    let mut ok = true;
    for (p, r) in &results {
        ok &= report(r, p, opts.quiet);
    }
    if !opts.quiet {
        let passed = results.iter().filter(|(_, r)| r.as_ref().is_ok_and(|o| o.success())).count();
        println!("{passed}/{} scenarios passed", results.len());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("MCF_AVOID_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Run { config, opts } => report(&run_one(&config, &opts), &config, opts.quiet),
        Command::Suite { dir, opts } => suite(&dir, &opts).unwrap_or_else(|e| {
            eprintln!("{e}");
            false
        }),
        Command::Oracle { kind, params, at } => match kind.parse::<OracleKind>().and_then(|k| oracle(k, &params, &at)) {
            Ok(r) => {
                println!("{}", serde_json::to_string_pretty(&r).expect("oracle result serializes"));
                true
            }
            Err(e) => {
                eprintln!("{e}");
                false
            }
        },
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
