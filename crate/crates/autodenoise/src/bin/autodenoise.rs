//! Command-line entry point. All heavy lifting lives in the library; this
//! binary parses flags, applies them over the optional TOML config (flags
//! win), and dispatches.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use autodenoise::config::{NoiseConfig, RunConfig};
use autodenoise::error::Result;
use autodenoise::runner;

#[derive(Parser)]
#[command(
    name = "autodenoise",
    version,
    about = "RL instance denoising for CTR models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction dataset (CSV + schema + teacher).
    Synth(SynthArgs),
    /// Split a dataset and flip a fraction of train labels into a bundle.
    Noise(NoiseArgs),
    /// Run the configured denoising method (or a baseline) end to end.
    Run(RunArgs),
    /// Train a backbone from scratch on an exported subset, with a
    /// same-seed full-data control.
    Transfer(TransferArgs),
    /// Evaluate a model checkpoint on one split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    items: usize,
    #[arg(long, default_value_t = 20_000)]
    interactions: usize,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    /// Dataset CSV to split and corrupt.
    #[arg(long)]
    data: PathBuf,
    /// Fraction of train labels to flip.
    #[arg(long)]
    rate: f64,
    /// Noise seed (which labels flip).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Shuffle seed for the 80/10/10 split.
    #[arg(long = "split-seed", default_value_t = 42)]
    split_seed: u64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

/// Config file plus the override flags shared by run/transfer/eval.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV or prepared bundle directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// autodenoise | tce | rce | random | none
    #[arg(long)]
    method: Option<String>,
    /// fm | deepfm
    #[arg(long)]
    model: Option<String>,
    /// Validation-phase selection ratio.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Warm-up epochs C.
    #[arg(long = "warmup-epochs")]
    warmup_epochs: Option<usize>,
    /// Overall training epochs T.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Flip this fraction of train labels before running.
    #[arg(long = "noise-rate")]
    noise_rate: Option<f64>,
    #[arg(long = "noise-seed")]
    noise_seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(data) = &self.data {
            config.data.path = Some(data.clone());
            config.data.synth = None;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(method) = &self.method {
            config.denoise.method = method.parse()?;
        }
        if let Some(model) = &self.model {
            config.model.kind = model.parse()?;
        }
        if let Some(epsilon) = self.epsilon {
            config.denoise.epsilon = epsilon;
        }
        if let Some(c) = self.warmup_epochs {
            config.denoise.warmup_epochs = c;
        }
        if let Some(t) = self.epochs {
            config.denoise.epochs = t;
        }
        if let Some(m) = self.batch_size {
            config.train.batch_size = m;
        }
        if let Some(rate) = self.noise_rate {
            config.noise = Some(NoiseConfig {
                flip_rate: rate,
                seed: self
                    .noise_seed
                    .or_else(|| config.noise.as_ref().and_then(|n| n.seed)),
            });
        } else if let Some(seed) = self.noise_seed {
            if let Some(noise) = &mut config.noise {
                noise.seed = Some(seed);
            }
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Subset file exported by a previous run.
    #[arg(long)]
    subset: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// train | validation | test
    #[arg(long, default_value = "test")]
    split: String,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let out = runner::cmd_synth(
                args.users,
                args.items,
                args.interactions,
                args.rank,
                args.seed,
                &args.out_dir,
            )?;
            println!(
                "wrote {} interactions ({} users x {} items) to {}",
                out.instances.len(),
                args.users,
                args.items,
                args.out_dir.display()
            );
        }
        Command::Noise(args) => {
            let dir = runner::cmd_noise(
                &args.data,
                args.rate,
                args.seed,
                args.split_seed,
                (0.8, 0.1, 0.1),
                &args.out_dir,
            )?;
            println!("wrote noisy bundle to {}", dir.display());
        }
        Command::Run(args) => {
            let config = args.config.resolve()?;
            let (report, artifacts) = runner::cmd_run(&config, &args.out_dir)?;
            for r in &report.records {
                println!(
                    "epoch {:>3}: val auc {:.4} logloss {:.4} | test auc {:.4} logloss {:.4} | subset {}",
                    r.epoch, r.val_auc, r.val_logloss, r.test_auc, r.test_logloss, r.subset_size
                );
            }
            println!(
                "best epoch {}: val auc {:.4}, test auc {:.4}, subset {}",
                report.best.epoch,
                report.best.val_auc,
                report.best.test_auc,
                report.best.subset_size
            );
            if let Some(q) = &report.denoise_quality {
                println!(
                    "denoising: dropped {} (flipped {}), precision {:?}, recall {:?}",
                    q.dropped, q.flipped, q.precision, q.recall
                );
            }
            println!("report: {}", artifacts.report.display());
            if let Some(subset) = &artifacts.subset {
                println!("subset: {}", subset.display());
            }
        }
        Command::Transfer(args) => {
            let config = args.config.resolve()?;
            let kind = config.model.kind;
            let report = runner::cmd_transfer(&config, &args.subset, kind, &args.out_dir)?;
            println!(
                "transfer ({}): test auc {:.4} logloss {:.4}",
                report.model, report.transfer_test_auc, report.transfer_test_logloss
            );
            println!(
                "control  ({}): test auc {:.4} logloss {:.4}",
                report.model, report.control_test_auc, report.control_test_logloss
            );
        }
        Command::Eval(args) => {
            let config = args.config.resolve()?;
            let report = runner::cmd_eval(&config, &args.checkpoint, &args.split)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
