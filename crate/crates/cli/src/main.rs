use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use soc_cli::commands::{self, CliError, Result, EXIT_CONFIG, EXIT_FAILURE};
use soc_cli::config::RunConfig;
use soc_core::data::FilterPolicy;
use soc_core::SocVariant;

/// Self-over-co attention experiments: synthetic data, training,
/// evaluation, ablations and gradient checks.
#[derive(Parser, Debug)]
#[command(name = "soc", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    /// Train the base model without the SoC module.
    #[arg(long, global = true)]
    no_soc: bool,
    #[arg(long, global = true, value_enum)]
    filter_policy: Option<PolicyArg>,
    /// Share of each user's records, earliest first, used for training.
    #[arg(long, global = true)]
    split_ratio: Option<f64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic interaction log and item features.
    Synth,
    /// Train a model and write a checkpoint and loss curve.
    Train(DataArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(DataArgs),
    /// Train and evaluate the four ablation arms.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Consecutive seeds to run.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Check model gradients against finite differences.
    Gradcheck {
        /// Instances to check.
        #[arg(long)]
        seeds: Option<usize>,
        /// Corrupt the softmax backward rule by this relative amount.
        #[arg(long, num_args = 0..=1, default_missing_value = "0.01")]
        inject_fault: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Interaction CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Item feature CSV.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Full,
    #[value(name = "co_only")]
    CoOnly,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    And,
    Or,
}

fn config_error(message: String) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = Some(seed);
    }
    cfg.resolve_seed();
    if let Some(v) = c.variant {
        cfg.train.variant = match v {
            VariantArg::Full => SocVariant::Full,
            VariantArg::CoOnly => SocVariant::CoOnly,
            VariantArg::None => SocVariant::None,
        };
    }
    if c.no_soc {
        cfg.train.use_soc = false;
    }
    if let Some(p) = c.filter_policy {
        cfg.filter_policy = match p {
            PolicyArg::And => FilterPolicy::And,
            PolicyArg::Or => FilterPolicy::Or,
        };
    }
    if let Some(r) = c.split_ratio {
        cfg.split_ratio = r;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    let data = match &cli.command {
        Command::Train(d) | Command::Eval(d) | Command::Ablate { data: d, .. } => Some(d),
        _ => None,
    };
    if let Some(d) = data {
        if d.data.is_some() {
            cfg.data.interactions = d.data.clone();
        }
        if d.features.is_some() {
            cfg.data.item_features = d.features.clone();
        }
        if d.model.is_some() {
            cfg.data.model = d.model.clone();
        }
    }
    match &cli.command {
        Command::Ablate { seeds: Some(s), .. } => cfg.ablate.seeds = *s,
        Command::Gradcheck { seeds: Some(s), .. } => cfg.gradcheck.seeds = *s,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| config_error(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg)?,
        Command::Train(_) => commands::cmd_train(&cfg)?,
        Command::Eval(_) => {
            commands::cmd_eval(&cfg)?;
        }
        Command::Ablate { .. } => {
            commands::cmd_ablate(&cfg)?;
        }
        Command::Gradcheck { inject_fault, .. } => {
            return Ok(commands::cmd_gradcheck(&cfg, inject_fault)?.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
