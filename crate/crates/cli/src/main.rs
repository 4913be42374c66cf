//! Batch CLI for the energy-variational solver toolkit.
//!
//! Exit codes: 0 all asserted checks pass, 1 a check failed (the report is
//! still written), 2 malformed configuration or unreadable artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use envar_cli::config::RunConfig;
use envar_cli::report::{now_unix_ms, ReportBundle};
use envar_cli::runner::{self, RunnerError};

#[derive(Parser)]
#[command(name = "envar", about = "Energy-variational PDE solver and verifier", version)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Accept artifacts whose config hash does not match.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the minimizing-movements stepper and store the trajectory.
    Simulate,
    /// Check the energy-variational inequality on a stored trajectory.
    Verify {
        /// Trajectory file (defaults to <output_dir>/trajectory.json).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Pick the best among stored candidate trajectories.
    Select {
        /// Candidate trajectory files.
        #[arg(long, required = true, num_args = 1..)]
        candidates: Vec<PathBuf>,
    },
    /// Reconstruct the minimal admissible energy curve by linear programming.
    ReconstructDefect {
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Midpoint-convexity probes for the configured system.
    ProbeConvexity {
        /// Symmetric 3x3 matrix as "m11,m22,m33,m12,m13,m23" (binormal probe).
        #[arg(long)]
        matrix: Option<String>,
        /// Coefficient of the 1-homogeneous probe (binormal).
        #[arg(long)]
        hom_gamma: Option<f64>,
    },
    /// Relative-energy Gronwall envelope against the translating circle.
    WeakStrong {
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Collate all bundles in the output directory into one report + CSV.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let started = now_unix_ms();
    let default_traj = runner::trajectory_path(&cfg);
    let traj_of = |p: &Option<PathBuf>| p.clone().unwrap_or_else(|| default_traj.clone());
    let (verb_name, result): (&str, Result<ReportBundle, RunnerError>) = match &cli.verb {
        Verb::Simulate => ("simulate", runner::simulate(&cfg)),
        Verb::Verify { trajectory } => {
            ("verify", runner::verify_trajectory(&cfg, &traj_of(trajectory), cli.force))
        }
        Verb::Select { candidates } => ("select", runner::select(&cfg, candidates, cli.force)),
        Verb::ReconstructDefect { trajectory } => (
            "reconstruct-defect",
            runner::reconstruct_defect(&cfg, &traj_of(trajectory), cli.force),
        ),
        Verb::ProbeConvexity { matrix, hom_gamma } => {
            let parsed: Result<Option<[f64; 6]>, String> = match matrix {
                None => Ok(None),
                Some(text) => {
                    let vals: Result<Vec<f64>, _> =
                        text.split(',').map(|v| v.trim().parse::<f64>()).collect();
                    match vals {
                        Ok(v) if v.len() == 6 => {
                            let mut a = [0.0; 6];
                            a.copy_from_slice(&v);
                            Ok(Some(a))
                        }
                        Ok(v) => Err(format!("--matrix needs 6 entries, got {}", v.len())),
                        Err(e) => Err(format!("--matrix: {e}")),
                    }
                }
            };
            match parsed {
                Ok(m) => ("probe-convexity", runner::probe_convexity(&cfg, m, *hom_gamma)),
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(2);
                }
            }
        }
        Verb::WeakStrong { trajectory } => {
            ("weak-strong", runner::weak_strong(&cfg, &traj_of(trajectory), cli.force))
        }
        Verb::Report => ("report", runner::report(&cfg, cli.force)),
    };
    match result {
        Ok(mut bundle) => {
            bundle.timestamps.started_unix_ms = started;
            bundle.timestamps.finished_unix_ms = now_unix_ms();
            bundle.timestamps.elapsed_ms =
                bundle.timestamps.finished_unix_ms.saturating_sub(started);
            let path = runner::bundle_path(&cfg, verb_name);
            if let Err(e) = bundle.write(&path) {
                eprintln!("error: writing {}: {e}", path.display());
                return ExitCode::from(2);
            }
            for check in &bundle.checks {
                println!(
                    "{} {}: {} (tol {})",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.value,
                    check.tolerance
                );
            }
            if bundle.all_pass() {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed; report at {}", path.display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
