//! `wfr` — solve, path, certify and distance workflows over JSON configs.
//!
//! Exit codes: 0 success (certify: certified), 1 certify ran but the
//! certificate failed, 2 config/shape errors, 3 infeasible problems or
//! violated constructor preconditions, 4 solver failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use wfr::certify::certify;
use wfr::config::RunConfig;
use wfr::error::WfrError;
use wfr::paths::PathTriple;
use wfr::solver::{solve, Solution};

mod io;

#[derive(Parser)]
#[command(name = "wfr", about = "Constrained unbalanced dynamic optimal transport solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Output directory (overrides the config's outputs.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in the summary; reserved for stochastic features.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Suppress console output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the constrained energy and export summary, log and frames.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Build a closed-form path and export its frames and exact energy.
    Path {
        config: PathBuf,
        /// One of: teleport, linear_fr, scaling, balanced_quantile, scaled_balanced.
        #[arg(long)]
        constructor: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Check the optimality certificate for a stored path and potential.
    Certify {
        config: PathBuf,
        /// Staggered path file (written by solve/path as staggered.csv).
        #[arg(long)]
        path: PathBuf,
        /// Potential file with header t,x,phi at time nodes × cells.
        #[arg(long)]
        phi: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Solve and print only the distance √energy.
    Distance {
        config: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve { config, opts } => cmd_solve(&config, &opts, false),
        Command::Path { config, constructor, opts } => cmd_path(&config, &constructor, &opts),
        Command::Certify { config, path, phi, opts } => cmd_certify(&config, &path, &phi, &opts),
        Command::Distance { config, opts } => cmd_solve(&config, &opts, true),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<RunConfig, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("config error: cannot read {}: {e}", path.display());
        2u8
    })?;
    RunConfig::from_json(&text).map_err(|e| {
        eprintln!("{e}");
        2u8
    })
}

/// Maps library errors to the documented exit codes.
fn error_code(e: &WfrError) -> u8 {
    match e {
        WfrError::Config(_) | WfrError::GridSize(_) | WfrError::Measure(_)
        | WfrError::Constraint(_) | WfrError::Params(_) => 2,
        WfrError::Infeasible { .. } | WfrError::PathConstruction(_) => 3,
        WfrError::CgFailure { .. } | WfrError::NonFiniteEnergy
        | WfrError::IllConditionedGram { .. } => 4,
    }
}

fn out_dir(config: &RunConfig, opts: &CommonOpts) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| config.outputs.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wfr-out"))
}

fn run_solve(config: &RunConfig) -> Result<(Solution, wfr::solver::Problem), u8> {
    let (problem, params) = config.build().map_err(|e| {
        eprintln!("{e}");
        error_code(&e)
    })?;
    if let Err(e) = problem.check_feasible() {
        eprintln!("{e}");
        if let WfrError::Infeasible { .. } = e {
            let rep = wfr::measures::check_feasibility(
                &problem.spec,
                &problem.rho0,
                &problem.rho1,
                problem.feasibility_tol,
            );
            eprintln!(
                "feasibility report: residual_0 = {:?}, residual_1 = {:?}, tol = {:e}",
                rep.residual_0, rep.residual_1, rep.tol
            );
        }
        return Err(error_code(&e));
    }
    let solution = solve(&problem, &params).map_err(|e| {
        eprintln!("{e}");
        error_code(&e)
    })?;
    Ok((solution, problem))
}

fn cmd_solve(config_path: &Path, opts: &CommonOpts, distance_only: bool) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let started = Instant::now();
    let (solution, problem) = match run_solve(&config) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let wall = started.elapsed().as_secs_f64();
    if distance_only {
        println!("{}", io::fmt_f64(solution.distance));
        return 0;
    }
    let dir = out_dir(&config, opts);
    if let Err(e) = io::write_solve_outputs(&dir, &config, &problem, &solution, wall, opts.seed) {
        eprintln!("output error: {e}");
        return 4;
    }
    if !opts.quiet {
        println!(
            "energy {:.6} distance {:.6} iterations {} converged {} ce_residual {:.3e} constraint_residual {:.3e}",
            solution.energy,
            solution.distance,
            solution.iterations,
            solution.converged,
            solution.ce_residual,
            solution.constraint_residual
        );
        println!("outputs in {}", dir.display());
    }
    0
}

fn cmd_path(config_path: &Path, constructor: &str, opts: &CommonOpts) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let path = match config.build_path(constructor) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return error_code(&e);
        }
    };
    let dir = out_dir(&config, opts);
    let energy = path.energy();
    if let Err(e) = io::write_path_outputs(&dir, &config, &path, constructor, energy) {
        eprintln!("output error: {e}");
        return 4;
    }
    if !opts.quiet {
        println!("constructor {constructor} energy {}", io::fmt_f64(energy));
        println!("outputs in {}", dir.display());
    }
    0
}

fn cmd_certify(config_path: &Path, path_file: &Path, phi_file: &Path, opts: &CommonOpts) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (grid, tgrid) = match config.grids() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let staggered = match io::read_staggered(path_file, &grid, &tgrid) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("path file error: {e}");
            return 2;
        }
    };
    let phi = match io::read_phi(phi_file, &grid, &tgrid) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("phi file error: {e}");
            return 2;
        }
    };
    let spec = match config.constraint.build(&grid, &tgrid) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let triple = PathTriple::from_staggered(staggered, &grid, &tgrid, config.delta);
    // Certification tolerance: the conditions hold only up to
    // discretization error, so 1e-2 is the working default.
    let tol = 1e-2;
    let report = certify(&triple, &phi, &spec, config.delta, tol);
    if !opts.quiet {
        println!(
            "certified {} (tol {:.3e})\nr_hj {:.6e}\nr_membership {:.6e}\nr_momentum {:.6e}\nr_source {:.6e}",
            report.certified, report.tol, report.r_hj, report.r_membership, report.r_momentum, report.r_source
        );
    }
    if report.certified {
        0
    } else {
        1
    }
}
