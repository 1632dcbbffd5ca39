use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarm_cc::config::parse_config;
use swarm_cc::env::Scheme;
use swarm_cc::run::{eval_run, plot_runs, sweep, train_run, SweepAxis};
use swarm_cc::trainer::TrainConfig;
use swarm_cc::Error;

/// Energy-constrained C&C dissemination in a UAV swarm: train, evaluate, sweep and plot.
///
/// Log verbosity follows SWARM_CC_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "swarm-cc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent population and write a run directory.
    Train {
        /// Config file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// unicast, broadcast or hybrid (overrides the config).
        #[arg(long)]
        scheme: Option<String>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint already in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Greedy evaluation of a trained run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Evaluate under a different config (must match the trained scheme and swarm).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
    },
    /// Train every point of a grid, e.g. --axis e_c=1,3,5 --axis pid.kp=0.01,0.1.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required = true)]
        axis: Vec<String>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replicates per grid point, seeded seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Render charts and the underlying CSV for one or more runs.
    Plot {
        #[arg(long, required = true, num_args = 1..)]
        run: Vec<PathBuf>,
        /// Output directory; defaults to <first run>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>, scheme: Option<&str>, seed: Option<u64>) -> Result<TrainConfig, Error> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = scheme {
        cfg.scheme = Scheme::parse(s)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, scheme, seed, out, resume } => {
            let cfg = load_config(config.as_deref(), scheme.as_deref(), seed)?;
            let manifest = train_run(cfg, &out, resume)?;
            println!("trained {} episodes into {}", manifest.episodes_completed, out.display());
        }
        Command::Eval { run, episodes, config, seed } => {
            let s = eval_run(&run, config.as_deref(), episodes, seed)?;
            println!("rounds,mean_success,success_ci95,mean_energy,energy_ci95");
            println!("{},{:?},{:?},{:?},{:?}", s.rounds, s.mean_success, s.success_ci95, s.mean_energy, s.energy_ci95);
        }
        Command::Sweep { config, axis, scheme, seed, seeds, out } => {
            let cfg = load_config(config.as_deref(), scheme.as_deref(), seed)?;
            let axes = axis.iter().map(|a| SweepAxis::parse(a)).collect::<Result<Vec<_>, _>>()?;
            let points = sweep(&cfg, &axes, seeds, &out)?;
            println!("{} runs, summary in {}", points.len(), out.join("summary.csv").display());
        }
        Command::Plot { run, out } => {
            let out = out.unwrap_or_else(|| run[0].join("plots"));
            for p in plot_runs(&run, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARM_CC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
