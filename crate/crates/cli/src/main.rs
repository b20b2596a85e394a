//! `ncvxcs`: compressed-sensing reconstruction with nonconvex penalties.
//!
//! Exit codes: 0 success, 1 invalid configuration (bad flags, bad config
//! file, missing/conflicting parameters), 2 numerical failure (a solver
//! that must converge did not, or a search bracket failed).

mod cmds;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use cmds::Globals;
use config::{CliError, FormatArg};

#[derive(Parser, Debug)]
#[command(
    name = "ncvxcs",
    version,
    about = "Sparse reconstruction with SCAD/MCP/L1 penalties: exact threshold \
             operators, AMP with control schedules, state evolution, and \
             replica phase diagrams",
    propagate_version = true
)]
struct Cli {
    /// Flat key=value config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Result file path (default depends on the subcommand and format).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Result encoding: csv or json.
    #[arg(long, global = true)]
    format: Option<FormatArg>,

    /// Validate and print the resolved execution plan without computing.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Worker threads for grid sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Exact single-coordinate minimizer of x²/(2s) − w·x + J(x).
    Prox(cmds::ProxArgs),
    /// Run AMP reconstruction on a synthetic instance.
    Amp(cmds::AmpArgs),
    /// Iterate the (V, ε) state-evolution map from a starting point.
    SeRun(cmds::SeRunArgs),
    /// One-step state-evolution displacement field on a (V, ε) grid.
    SeFlow(cmds::SeFlowArgs),
    /// Basin-of-attraction map and success-basin volume on a (V, ε) grid.
    Basin(cmds::BasinArgs),
    /// Warm-started fixed-point continuation down a λ path; reports gaps.
    Continue(cmds::ContinueArgs),
    /// Solve the failure-side saddle-point equations for (Q, m, χ).
    Saddle(cmds::SaddleArgs),
    /// Closed-form perfect-reconstruction solution and its stability.
    Success(cmds::SuccessArgs),
    /// Phase boundary sweep: α_c over a ρ grid, or ρ_c over an α grid.
    Phase(cmds::PhaseArgs),
    /// Nonconvexity boundary: a_c at fixed λ (or a λ grid), or λ_c.
    Boundary(cmds::BoundaryArgs),
    /// Largest ρ reachable by slow λ continuation (the algorithmic limit).
    Ncc(cmds::NccArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: invalid parameter `jobs` = 0 (need jobs >= 1)");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    let g = Globals {
        config: cli.config,
        output: cli.output,
        format: cli.format,
        dry_run: cli.dry_run,
    };

    let result = match &cli.cmd {
        Cmd::Prox(a) => cmds::prox(a, &g),
        Cmd::Amp(a) => cmds::amp(a, &g),
        Cmd::SeRun(a) => cmds::se_run_cmd(a, &g),
        Cmd::SeFlow(a) => cmds::se_flow(a, &g),
        Cmd::Basin(a) => cmds::basin(a, &g),
        Cmd::Continue(a) => cmds::continue_cmd(a, &g),
        Cmd::Saddle(a) => cmds::saddle(a, &g),
        Cmd::Success(a) => cmds::success(a, &g),
        Cmd::Phase(a) => cmds::phase(a, &g),
        Cmd::Boundary(a) => cmds::boundary(a, &g),
        Cmd::Ncc(a) => cmds::ncc(a, &g),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
