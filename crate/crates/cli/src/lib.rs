//! Command-line experiment runner: configuration, subcommands and the
//! `FRB1` model file format.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fedrobust_core::attacks::AttackFamily;
use fedrobust_core::eval::MetricsReport;
use fedrobust_core::nn::ModelVariant;

pub use config::{DataSource, ExperimentConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "fedrobust", version, about = "Train, attack and evaluate CNN and DiPSeN models, centrally or federated")]
pub struct Cli {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (also used for federated training).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `report.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Centralized training, clean evaluation, model.frb and summary.
    TrainCentral {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Federated training; also writes rounds.csv.
    TrainFederated {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Attacks the test set with a saved model and writes the adversarial set.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model_file: ModelFileArg,
        #[arg(long)]
        attack: Option<AttackFamily>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Clean evaluation of a saved model.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model_file: ModelFileArg,
    },
    /// Merges summary CSVs into one summary table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Basic CNN, DiPSeN baseline, overhead and robustness on every
    /// configured dataset.
    FullPipeline {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub model: Option<ModelVariant>,
    #[arg(long)]
    pub data: Option<DataSource>,
    /// Noise at prediction time (`on` or `off`).
    #[arg(long, value_parser = parse_switch)]
    pub infer_noise: Option<bool>,
}

#[derive(Debug, Args)]
pub struct ModelFileArg {
    /// Model to load; defaults to `model.frb` in the output directory.
    #[arg(long = "model-file")]
    pub path: Option<PathBuf>,
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected `on` or `off`, got `{other}`")),
    }
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(d) = self.data {
            cfg.data.source = d;
            cfg.pipeline.datasets = vec![d];
        }
        if let Some(on) = self.infer_noise {
            cfg.noise.at_inference = on;
        }
    }
}

/// Config file (or defaults) with the command-line overrides applied, then
/// validated.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.fed.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.report.out_dir = out.clone();
    }
    match &cli.command {
        Command::TrainCentral { common, epochs } => {
            common.apply(&mut cfg);
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::TrainFederated { common, rounds } => {
            common.apply(&mut cfg);
            if let Some(r) = rounds {
                cfg.fed.rounds = *r;
            }
        }
        Command::Attack { common, attack, epsilon, .. } => {
            common.apply(&mut cfg);
            if let Some(a) = attack {
                cfg.attack.family = *a;
            }
            if let Some(e) = epsilon {
                cfg.attack.epsilon = *e;
            }
        }
        Command::Evaluate { common, .. } | Command::FullPipeline { common } => common.apply(&mut cfg),
        Command::Report { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Vec<MetricsReport>> {
    let cfg = resolve_config(cli)?;
    let model_path = |arg: &ModelFileArg| arg.path.clone().unwrap_or_else(|| cfg.report.out_dir.join(commands::MODEL_FILE));
    match &cli.command {
        Command::TrainCentral { .. } => commands::train_central(&cfg),
        Command::TrainFederated { .. } => commands::train_federated(&cfg),
        Command::Attack { model_file, .. } => commands::attack(&cfg, &model_path(model_file)),
        Command::Evaluate { model_file, .. } => commands::evaluate(&cfg, &model_path(model_file)),
        Command::Report { inputs } => commands::report_merge(&cfg, inputs),
        Command::FullPipeline { .. } => commands::full_pipeline(&cfg),
    }
}
