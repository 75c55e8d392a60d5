use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aoi_cache::cli;
use aoi_cache::Error;

#[derive(Parser)]
#[command(
    name = "aoi-cache",
    about = "Age-optimal cache update planning and simulation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the relaxed problem: multiplier, mixing coefficient, analytics.
    Solve(CommonArgs),
    /// Simulate the configured policies against the relaxed bound.
    Simulate(CommonArgs),
    /// Sweep the mode-persistence parameter q and the budget M.
    SweepQ {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated q grid.
        #[arg(long, value_delimiter = ',')]
        q_grid: Option<Vec<f64>>,
        /// Comma-separated budget grid.
        #[arg(long, value_delimiter = ',')]
        m_grid: Option<Vec<usize>>,
    },
    /// Scale a homogeneous ensemble at fixed N/M and track the optimality gap.
    Asymptotic {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated list of ensemble sizes.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Fixed ratio N/M.
        #[arg(long, default_value_t = 8)]
        theta: usize,
    },
    /// Cross-check the LP solve against both oracles (debugging aid).
    #[command(hide = true)]
    OracleCheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
}

fn init_workers(workers: Option<usize>) {
    if let Some(w) = workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global();
    }
}

fn load(common: &CommonArgs) -> Result<cli::ScenarioConfig, Error> {
    let mut cfg = cli::load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    Ok(cfg)
}

fn run() -> Result<(), Error> {
    let parsed = Cli::parse();
    match parsed.command {
        Command::Solve(common) => {
            init_workers(common.workers);
            let cfg = load(&common)?;
            cli::cmd_solve(&cfg, common.out.as_deref())?;
        }
        Command::Simulate(common) => {
            init_workers(common.workers);
            let cfg = load(&common)?;
            cli::cmd_simulate(&cfg, common.out.as_deref())?;
        }
        Command::SweepQ {
            common,
            q_grid,
            m_grid,
        } => {
            init_workers(common.workers);
            let cfg = load(&common)?;
            let q_grid = q_grid.unwrap_or_else(cli::default_q_grid);
            let m_grid = m_grid.unwrap_or_else(|| {
                vec![cfg.ensemble.build().map(|e| e.bandwidth).unwrap_or(1)]
            });
            cli::cmd_sweep_q(&cfg, &q_grid, &m_grid, common.out.as_deref())?;
        }
        Command::Asymptotic {
            common,
            n_grid,
            theta,
        } => {
            init_workers(common.workers);
            let cfg = load(&common)?;
            let n_grid =
                n_grid.unwrap_or_else(|| vec![8, 16, 32, 64, 128].into_iter().collect());
            cli::cmd_asymptotic(&cfg, &n_grid, theta, common.out.as_deref())?;
        }
        Command::OracleCheck { instances, seed } => {
            cli::cmd_oracle_check(instances, seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
