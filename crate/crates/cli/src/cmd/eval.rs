use crate::config::{load_object, load_typed, parse, resolve_seed, set};
use crate::manifest::Run;
use crate::Status;
use anyhow::{ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcgan::data::{read_dataset, Dataset, MixtureSpec};
use rcgan::eval::{
    generated_label_accuracy, label_recovery_accuracy, write_results, BayesOracle, MetricResult, RecoveryOptions,
};
use rcgan::gan::{Checkpoint, ConditionalGenerator};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Mixture spec JSON; defines the Bayes oracle.
    #[arg(long, value_name = "PATH")]
    mixture: PathBuf,
    /// Clean dataset CSV for label recovery; skipped when absent.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
    /// Eval config JSON.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Generated samples scored by the oracle.
    #[arg(long, value_name = "N")]
    gen_samples: Option<usize>,
    /// Leading records of the truth dataset used for recovery.
    #[arg(long, value_name = "N")]
    recovery_records: Option<usize>,
    /// Latent restarts per candidate class.
    #[arg(long)]
    restarts: Option<usize>,
    /// Gradient steps per restart.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results.json", value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub gen_samples: usize,
    /// `None` scores every record.
    pub recovery_records: Option<usize>,
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub z_bound: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let r = RecoveryOptions::default();
        Self {
            seed: 0,
            gen_samples: 10_000,
            recovery_records: Some(500),
            restarts: r.restarts,
            steps: r.steps,
            step_size: r.step_size,
            z_bound: r.z_bound,
        }
    }
}

impl EvalConfig {
    pub fn recovery(&self) -> RecoveryOptions {
        RecoveryOptions {
            restarts: self.restarts,
            steps: self.steps,
            step_size: self.step_size,
            z_bound: self.z_bound,
            seed: self.seed,
        }
    }
}

/// Generated label accuracy, then label recovery accuracy when `truth` is
/// given. The oracle must pass its self-test first.
pub fn metrics<G: ConditionalGenerator + ?Sized>(
    g: &G,
    spec: &MixtureSpec,
    truth: Option<&Dataset>,
    cfg: &EvalConfig,
) -> Result<Vec<MetricResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let oracle = BayesOracle::certified(spec.clone(), &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen = generated_label_accuracy(g, &oracle, cfg.gen_samples, &spec.priors, &mut rng)?;
    let mut out = vec![MetricResult {
        metric: "gen_label_acc".into(),
        value: gen,
        n: cfg.gen_samples,
        seed: cfg.seed,
        opts: serde_json::json!({}),
    }];
    if let Some(truth) = truth {
        let mut subset = truth.clone();
        if let Some(k) = cfg.recovery_records {
            subset.records.truncate(k);
        }
        let opts = cfg.recovery();
        let value = label_recovery_accuracy(g, &subset, &opts)?;
        out.push(MetricResult {
            metric: "label_recovery_acc".into(),
            value,
            n: subset.len(),
            seed: cfg.seed,
            opts: serde_json::to_value(&opts)?,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    checkpoint: String,
    mixture: String,
    truth: Option<String>,
    eval: &'a EvalConfig,
}

pub fn run(args: Args, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("eval");
    let mut obj = load_object(args.config.as_deref())?;
    set(&mut obj, "gen_samples", args.gen_samples);
    set(&mut obj, "recovery_records", args.recovery_records);
    set(&mut obj, "restarts", args.restarts);
    set(&mut obj, "steps", args.steps);
    set(&mut obj, "step_size", args.step_size);
    resolve_seed(&mut obj, args.seed)?;
    let cfg: EvalConfig = parse(Value::Object(obj), "eval config")?;
    cfg.recovery().validate()?;

    ensure!(args.checkpoint.exists(), "checkpoint file not found: {}", args.checkpoint.display());
    let ckpt = Checkpoint::read(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let (g, _) = ckpt.restore()?;
    let spec: MixtureSpec = load_typed(&args.mixture)?;
    spec.validate()?;
    let truth = match &args.truth {
        Some(path) => {
            let ds = read_dataset(path, spec.m, None).with_context(|| format!("reading {}", path.display()))?;
            Some(ds)
        }
        None => None,
    };
    let results = metrics(&g, &spec, truth.as_ref(), &cfg)?;
    write_results(&results, &args.out)?;
    run.wrote(&args.out);
    for r in &results {
        println!("{} {:.4} (n = {})", r.metric, r.value, r.n);
    }
    let record = EvalRecord {
        checkpoint: args.checkpoint.display().to_string(),
        mixture: args.mixture.display().to_string(),
        truth: args.truth.as_ref().map(|p| p.display().to_string()),
        eval: &cfg,
    };
    run.finish(&record, cfg.seed, 0, &args.out, manifest)?;
    Ok(Status::Success)
}
