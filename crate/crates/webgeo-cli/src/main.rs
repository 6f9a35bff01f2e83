//! Command-line front end for planar web geometry.
//!
//! Subcommands: `analyze` (connection/curvature/Wong grids), `geodesics`
//! (curve integration with leaf cross-checks), `dual` (twistor-side F and K0
//! grids), `verify` (the full invariant suite). Exit codes: 0 success,
//! 1 verification failure, 2 configuration error, 3 evaluation error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{JobConfig, OutputFormat};
use output::OutputContext;

#[derive(Parser)]
#[command(name = "webgeo", version, about = "Planar web geometry toolkit")]
struct Cli {
    /// Job configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: csv | json | csv,json (overrides the config).
    #[arg(long, global = true)]
    format: Option<String>,

    /// Seed for the randomized suites (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Fault injection: adds EPS * y to Gamma^x_xx before verification.
    #[arg(long, global = true, default_value_t = 0.0)]
    perturb_gamma: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Connection, curvature, Ricci-skewness and Wong normal-form grids.
    Analyze,
    /// Integrate geodesics; initial conditions from the config or --ic.
    Geodesics {
        /// Initial condition "x0,y0,p0" (repeatable).
        #[arg(long)]
        ic: Vec<String>,
    },
    /// Dual ODE right-hand side and K0 grids by first-integral elimination.
    Dual,
    /// Run every module's invariant suite and report pass/fail records.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("webgeo: cannot configure {n} workers: {e}");
            return ExitCode::from(2);
        }
    }

    let Some(config_path) = cli.config.as_ref() else {
        eprintln!("webgeo: --config PATH is required");
        return ExitCode::from(2);
    };
    let mut cfg = match JobConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("webgeo: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = &cli.out {
        cfg.out_dir = dir.display().to_string();
    }
    if let Some(fmt) = &cli.format {
        cfg.format = match fmt.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            "csv,json" | "json,csv" | "both" => OutputFormat::Both,
            other => {
                eprintln!("webgeo: bad --format `{other}` (csv | json | csv,json)");
                return ExitCode::from(2);
            }
        };
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let out = match OutputContext::new(cfg.out_dir.as_ref(), cfg.config_hash, cfg.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!(
                "webgeo: cannot create output directory {}: {e}",
                cfg.out_dir
            );
            return ExitCode::from(2);
        }
    };

    let outcome = match &cli.command {
        Command::Analyze => commands::cmd_analyze(&cfg, &out),
        Command::Geodesics { ic } => {
            let mut extra = Vec::new();
            for spec in ic {
                let parts: Vec<f64> = spec
                    .split(',')
                    .filter_map(|p| p.trim().parse().ok())
                    .collect();
                if parts.len() != 3 {
                    eprintln!("webgeo: bad --ic `{spec}` (expected x0,y0,p0)");
                    return ExitCode::from(2);
                }
                extra.push([parts[0], parts[1], parts[2]]);
            }
            commands::cmd_geodesics(&cfg, &out, &extra)
        }
        Command::Dual => commands::cmd_dual(&cfg, &out),
        Command::Verify => commands::cmd_verify(&cfg, &out, cli.perturb_gamma),
    };

    if let Outcome::EvaluationError(msg) = &outcome {
        eprintln!("webgeo: {msg}");
    }
    ExitCode::from(outcome.code())
}
