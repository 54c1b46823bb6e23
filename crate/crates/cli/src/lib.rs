//! Command-line driver: argument parsing, config resolution and the
//! subcommands. The binary in `main.rs` only maps errors to exit codes.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fredo_core::DomainMode;

pub use config::RunConfig;
pub use error::{exit, CliError};
pub use run::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "fredo",
    version,
    about = "Periodic baselines and frequency-domain forecasters"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// CSV column holding timestamps, dropped on load.
    #[arg(long, global = true)]
    pub timestamp_col: Option<String>,
    #[arg(long, global = true)]
    pub period: Option<usize>,
    /// Must be a multiple of the period; sets r = input_len / period.
    #[arg(long, global = true)]
    pub input_len: Option<usize>,
    #[arg(long, global = true)]
    pub output_len: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct DataArgs {
    /// CSV dataset, one column per series.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train,val,test fractions, e.g. 0.6,0.2,0.2.
    #[arg(long)]
    pub split: Option<String>,
    /// Step between forecast origins.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub domain: Option<DomainMode>,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate AverageTile on the test split, optionally choosing r on validation.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        r: Option<usize>,
        /// Candidate r values, e.g. 1,2,3.
        #[arg(long, value_delimiter = ',')]
        search_r: Option<Vec<usize>>,
        #[arg(long)]
        max_input_len: Option<usize>,
    },
    /// Train one model on all series and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a checkpoint on the test split against AverageTile.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Per-series FreDo vs TimeDo comparison with a paired t-test.
    CompareDomains {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Analytic and Monte-Carlo forecast variance of an AR(p) process.
    SimulateDgp {
        /// AR coefficients, e.g. 0.5 or 0.6,-0.2.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Option<Vec<f64>>,
        #[arg(long, allow_negative_numbers = true)]
        c: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Number of horizons, starting at 0.
        #[arg(long)]
        horizons: Option<usize>,
        /// Monte-Carlo paths; 0 skips the simulation.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write the seeded synthetic dataset as CSV.
    GenSynthetic {
        #[arg(long)]
        n_series: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        harmonics: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
        /// Seed of the generated data (independent of --seed).
        #[arg(long)]
        data_seed: Option<u64>,
    },
    /// Dominant period of each series.
    EstimatePeriod {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        max_period: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Baseline { .. } => "baseline",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::CompareDomains { .. } => "compare-domains",
            Command::SimulateDgp { .. } => "simulate-dgp",
            Command::GenSynthetic { .. } => "gen-synthetic",
            Command::EstimatePeriod { .. } => "estimate-period",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    set_some(&mut cfg.data.path, d.data.clone());
    set(&mut cfg.data.split, d.split.clone());
    set(&mut cfg.data.stride, d.stride);
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs) {
    set(&mut cfg.train.lr, t.lr);
    set(&mut cfg.train.max_epochs, t.epochs);
    set(&mut cfg.train.patience, t.patience);
    set(&mut cfg.train.batch_size, t.batch_size);
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    set(&mut cfg.seed, g.seed);
    set_some(&mut cfg.data.timestamp_col, g.timestamp_col.clone());
    set_some(&mut cfg.model.period, g.period);
    set_some(&mut cfg.model.input_len, g.input_len);
    set_some(&mut cfg.model.output_len, g.output_len);
    match &cli.command {
        Command::Baseline {
            data,
            r,
            search_r,
            max_input_len,
        } => {
            apply_data(&mut cfg, data);
            set(&mut cfg.model.r, *r);
            set_some(&mut cfg.baseline.search_r, search_r.clone());
            set_some(&mut cfg.baseline.max_input_len, *max_input_len);
        }
        Command::Train { data, model, train } => {
            apply_data(&mut cfg, data);
            set(&mut cfg.model.r, model.r);
            set(&mut cfg.model.depth, model.depth);
            set(&mut cfg.model.domain, model.domain);
            apply_train(&mut cfg, train);
        }
        Command::Eval { data, .. } => apply_data(&mut cfg, data),
        Command::CompareDomains {
            data,
            r,
            depth,
            train,
        } => {
            apply_data(&mut cfg, data);
            set(&mut cfg.model.r, *r);
            set(&mut cfg.model.depth, *depth);
            apply_train(&mut cfg, train);
        }
        Command::SimulateDgp {
            theta,
            c,
            sigma2,
            horizons,
            trials,
        } => {
            set(&mut cfg.dgp.theta, theta.clone());
            set(&mut cfg.dgp.c, *c);
            set(&mut cfg.dgp.sigma2, *sigma2);
            set(&mut cfg.dgp.horizons, *horizons);
            set(&mut cfg.dgp.trials, *trials);
        }
        Command::GenSynthetic {
            n_series,
            length,
            harmonics,
            noise_std,
            data_seed,
        } => {
            set(&mut cfg.synthetic.n_series, *n_series);
            set(&mut cfg.synthetic.length, *length);
            set(&mut cfg.synthetic.harmonics, *harmonics);
            set(&mut cfg.synthetic.noise_std, *noise_std);
            set(&mut cfg.synthetic.seed, *data_seed);
            set(&mut cfg.synthetic.period, g.period);
        }
        Command::EstimatePeriod { data, .. } => apply_data(&mut cfg, data),
    }
    Ok(cfg)
}

/// Resolves the config and runs the command. Returns the manifest written.
pub fn execute(cli: &Cli) -> Result<RunManifest, CliError> {
    let cfg = resolve_config(cli)?;
    let out = cli
        .global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    commands::dispatch(&cli.command, cfg, &out)
}
