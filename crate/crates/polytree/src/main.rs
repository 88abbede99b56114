use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polytree::cli::{self, GlobalOpts};

#[derive(Parser)]
#[command(name = "polytree", version, about = "Polytopic-tree feedback synthesis for PWA systems")]
struct Cli {
    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with growth/solver overrides (e.g. {"milp": {"gap_tol": 1e-6}}).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a polytopic tree for a scenario; writes tree.json and stats.csv.
    Grow {
        #[arg(long)]
        scenario: PathBuf,
        /// Growth iterations (defaults to the scenario's setting).
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run the closed-loop policy from an initial state; writes a trace CSV.
    Simulate {
        #[arg(long)]
        tree: PathBuf,
        /// Comma-separated initial state, e.g. "0.05,-0.2".
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value = "trace.csv")]
        out: String,
    },
    /// Sample states and report tree membership (optionally cross-checked
    /// against the point-MPC oracle up to a horizon cap).
    Coverage {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        mpc_horizon: Option<usize>,
    },
    /// Render tree projections as SVG, optionally overlaying a trace.
    Plot {
        #[arg(long)]
        tree: PathBuf,
        /// Projection pairs like "0,1"; repeatable.
        #[arg(long = "proj")]
        projections: Vec<String>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Export the goal-directed trajectory model in LP text format.
    Export {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value = "model.lp")]
        out: String,
    },
    /// Check that the scenario's cells partition the state-control box.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10000)]
        samples: usize,
    },
}

fn parse_proj(text: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("projection {text:?} must be two comma-separated indices"));
    }
    let a = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let b = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let opts = GlobalOpts {
        seed: args.seed,
        config: args.config,
        out_dir: args.out_dir,
        quiet: args.quiet,
    };
    let result = match args.command {
        Command::Grow { scenario, iters } => cli::cmd_grow(&scenario, iters, &opts).map(|_| ()),
        Command::Simulate { tree, x0, steps, out } => {
            cli::cmd_simulate(&tree, &x0, steps, &out, &opts).map(|_| ())
        }
        Command::Coverage { tree, samples, mpc_horizon } => {
            cli::cmd_coverage(&tree, samples, mpc_horizon, &opts).map(|_| ())
        }
        Command::Plot { tree, projections, trace } => {
            let mut projs = Vec::new();
            for p in &projections {
                match parse_proj(p) {
                    Ok(pair) => projs.push(pair),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(3);
                    }
                }
            }
            cli::cmd_plot(&tree, &projs, trace.as_deref(), &opts).map(|_| ())
        }
        Command::Export { scenario, horizon, out } => {
            cli::cmd_export(&scenario, horizon, &out, &opts).map(|_| ())
        }
        Command::Validate { scenario, samples } => cli::cmd_validate(&scenario, samples, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
