use clap::{Parser, Subcommand};
use pixelstate::cli::{cmd_collect, cmd_eval, cmd_train_predictor, cmd_train_rl, EvalTarget};
use pixelstate::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Learn interpretable cart-pole state from rendered frames and train DQN
/// control on the estimates.
#[derive(Parser)]
#[command(name = "pixelstate", version, about)]
struct Cli {
    /// Run configuration (TOML). Defaults apply for absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run directory (default: <output_root>/<run.id>).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the frame/action dataset with balanced resets.
    Collect {
        /// Override dataset.n_samples.
        #[arg(long)]
        n: Option<u64>,
        /// Override dataset.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the state predictor on the collected dataset.
    TrainPredictor {
        /// Override predictor.epochs (total target).
        #[arg(long)]
        epochs: Option<u32>,
        /// Continue from predictor/last.ckpt.
        #[arg(long)]
        resume: bool,
    },
    /// Train a DQN agent.
    TrainRl {
        /// Observation source: `full` (true state) or `predicted`.
        #[arg(long)]
        obs: String,
        /// Override rl.total_timesteps.
        #[arg(long)]
        timesteps: Option<u64>,
    },
    /// Evaluate artifacts and write metric tables and plots.
    Eval {
        /// What to evaluate: `predictor`, `full`, `predicted` or `all`.
        #[arg(long, default_value = "all")]
        obs: String,
        /// Explicit agent checkpoint instead of the run-directory default.
        #[arg(long)]
        agent: Option<PathBuf>,
        /// Override eval.n_rollouts.
        #[arg(long)]
        seeds: Option<u32>,
    },
}

fn effective_config(cli: &Cli) -> pixelstate::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.run_dir {
        // an explicit directory wins over output_root/id
        cfg.run.output_root = dir.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        cfg.run.id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "default".into());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> pixelstate::Result<()> {
    let mut cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Collect { n, seed } => {
            if let Some(n) = n {
                cfg.dataset.n_samples = *n;
            }
            if let Some(seed) = seed {
                cfg.dataset.seed = *seed;
            }
            cmd_collect(&cfg)
        }
        Command::TrainPredictor { epochs, resume } => {
            if let Some(epochs) = epochs {
                cfg.predictor.epochs = *epochs;
            }
            cmd_train_predictor(&cfg, *resume)
        }
        Command::TrainRl { obs, timesteps } => {
            if let Some(t) = timesteps {
                cfg.rl.total_timesteps = *t;
            }
            cmd_train_rl(&cfg, obs)
        }
        Command::Eval { obs, agent, seeds } => {
            if let Some(s) = seeds {
                cfg.eval.n_rollouts = *s;
            }
            cmd_eval(&cfg, EvalTarget::parse(obs)?, agent.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
