use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use strhc_cli::{cmd_run, cmd_sweep, cmd_validate, Overrides};
use strhc_core::config::Ablation;

/// Worker-pool size for sweeps (defaults to the number of CPUs).
const WORKERS_ENV: &str = "STRHC_WORKERS";

#[derive(Parser)]
#[command(name = "strhc", version, about = "Receding-horizon planner episodes, sweeps and dataset checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    FixedAttention,
}

#[derive(clap::Args)]
struct Common {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            ablation: self.ablation.map(|a| match a {
                AblationArg::None => Ablation::None,
                AblationArg::FixedAttention => Ablation::FixedAttention,
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one episode per (v_d, T) pair.
    Sweep {
        config: PathBuf,
        /// Prediction horizons in seconds.
        #[arg(long = "T", value_delimiter = ',', default_values_t = [2.0, 5.0, 8.0])]
        horizons: Vec<f64>,
        /// Target cruise speeds in m/s.
        #[arg(long = "vd", value_delimiter = ',', default_values_t = [10.0, 12.0, 15.0])]
        v_ds: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a trajectory CSV and print its statistics.
    Validate { dataset: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = match cli.command {
        Command::Run { config, common } => cmd_run(&config, &common.overrides()),
        Command::Sweep {
            config,
            horizons,
            v_ds,
            common,
        } => cmd_sweep(&config, &horizons, &v_ds, &common.overrides()),
        Command::Validate { dataset } => cmd_validate(&dataset),
    };
    ExitCode::from(code as u8)
}
