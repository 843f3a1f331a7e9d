use crate::config::{load_object, load_typed, parse, resolve_seed, set};
use crate::manifest::Run;
use crate::Status;
use anyhow::{ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcgan::data::{read_dataset, Dataset, MixtureSpec};
use rcgan::eval::{generated_label_accuracy, BayesOracle};
use rcgan::gan::{train, write_history, Generator, TrainConfig, TrainMode};
use rcgan::{ChannelSpec, ConfusionMatrix};
use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Corrupted-label loss: generated labels pass through the data's channel.
    Rcgan,
    /// Few-label loss: unconditional terms on all records plus lambda-weighted
    /// conditional terms on labeled ones.
    Lambda,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Training dataset CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Mixture spec JSON (class count, dimension, priors).
    #[arg(long, value_name = "PATH")]
    mixture: PathBuf,
    /// Channel spec JSON behind the observed labels; omit for clean data.
    #[arg(long, value_name = "PATH")]
    channel: Option<PathBuf>,
    /// Training config JSON.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    lr_disc: Option<f64>,
    #[arg(long)]
    lr_gen: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `log` or `linear`.
    #[arg(long)]
    phi: Option<String>,
    /// `minimax` or `non_saturating`.
    #[arg(long)]
    gen_objective: Option<String>,
    /// Bound on the projection matrix entries.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Score the generator after every epoch with this many oracle samples.
    #[arg(long, value_name = "N")]
    monitor: Option<usize>,
    #[arg(long, default_value = "checkpoint.json", value_name = "PATH")]
    checkpoint: PathBuf,
    /// Per-epoch losses CSV.
    #[arg(long, default_value = "history.csv", value_name = "PATH")]
    history: PathBuf,
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    mode: Mode,
    data: String,
    mixture: String,
    channel: Option<String>,
    monitor: Option<usize>,
    train: &'a TrainConfig,
}

/// Dataset plus the training mode it supports.
pub fn load_training_data(
    data: &Path,
    spec: &MixtureSpec,
    channel: Option<ChannelSpec>,
    mode: Mode,
) -> Result<(Dataset, TrainMode)> {
    let ds = read_dataset(data, spec.m, channel.clone()).with_context(|| format!("reading {}", data.display()))?;
    ensure!(ds.dim == spec.dim, "dataset has {} columns, mixture dimension is {}", ds.dim, spec.dim);
    let mode = match mode {
        Mode::Rcgan => {
            let c = match channel {
                Some(spec) => spec.build()?,
                None => ConfusionMatrix::identity(spec.m, 0),
            };
            TrainMode::Rcgan(c)
        }
        Mode::Lambda => TrainMode::Lambda,
    };
    Ok((ds, mode))
}

/// Per-epoch generated label accuracy on a dedicated stream.
pub fn monitor(spec: &MixtureSpec, n: usize, seed: u64) -> Result<impl FnMut(&Generator) -> f64> {
    let oracle = BayesOracle::new(spec.clone())?;
    let priors = spec.priors.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    Ok(move |g: &Generator| generated_label_accuracy(g, &oracle, n, &priors, &mut rng).unwrap_or(f64::NAN))
}

pub fn run(args: Args, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("train");
    let mut obj = load_object(args.config.as_deref())?;
    set(&mut obj, "epochs", args.epochs);
    set(&mut obj, "batch_size", args.batch_size);
    set(&mut obj, "steps_per_epoch", args.steps_per_epoch);
    set(&mut obj, "lr_disc", args.lr_disc);
    set(&mut obj, "lr_gen", args.lr_gen);
    set(&mut obj, "momentum", args.momentum);
    set(&mut obj, "lambda", args.lambda);
    set(&mut obj, "phi", args.phi.clone());
    set(&mut obj, "gen_objective", args.gen_objective.clone());
    set(&mut obj, "clip", args.clip);
    set(&mut obj, "latent_dim", args.latent_dim);
    resolve_seed(&mut obj, args.seed)?;
    let cfg: TrainConfig = parse(Value::Object(obj), "train config")?;
    cfg.validate()?;

    let spec: MixtureSpec = load_typed(&args.mixture)?;
    spec.validate()?;
    let channel = args.channel.as_deref().map(load_typed::<ChannelSpec>).transpose()?;
    let (ds, mode) = load_training_data(&args.data, &spec, channel, args.mode)?;
    let mut watch = args.monitor.map(|n| monitor(&spec, n, cfg.seed)).transpose()?;
    let outcome = train(&cfg, &ds, &mode, &spec.priors, watch.as_mut().map(|f| f as &mut dyn FnMut(&Generator) -> f64))?;

    outcome.checkpoint.write(&args.checkpoint)?;
    run.wrote(&args.checkpoint);
    write_history(&outcome.history, &args.history)?;
    run.wrote(&args.history);
    match outcome.history.last() {
        Some(last) => {
            let acc = last.gen_label_acc.map_or(String::new(), |a| format!(", generated label accuracy {a:.4}"));
            println!("{} epochs: loss_d {:.4}, loss_g {:.4}{acc}", cfg.epochs, last.loss_d, last.loss_g);
        }
        None => println!("0 epochs: checkpoint holds the initial parameters"),
    }
    let record = TrainRecord {
        mode: args.mode,
        data: args.data.display().to_string(),
        mixture: args.mixture.display().to_string(),
        channel: args.channel.as_ref().map(|p| p.display().to_string()),
        monitor: args.monitor,
        train: &cfg,
    };
    run.finish(&record, cfg.seed, 0, &args.checkpoint, manifest)?;
    Ok(Status::Success)
}
