use super::data::GenConfig;
use super::eval::{metrics, EvalConfig};
use crate::config::{load_object, parse, resolve_seed, section, set};
use crate::manifest::Run;
use crate::Status;
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcgan::data::{apply_channel, generate_mixture};
use rcgan::gan::{train, GanError, TrainConfig, TrainMode};
use rcgan::ChannelSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const HEADER: &str = "alpha,gen_label_acc,label_recovery_acc,seed";

#[derive(clap::Args)]
pub struct Args {
    /// Labeled fractions in (0, 1]; each label goes missing with probability 1 - alpha.
    #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
    alphas: Option<Vec<f64>>,
    /// Sweep config JSON: `alphas`, `seed`, and `data`, `train`, `eval` sections.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; row `i` uses `seed + i`. Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    gen_samples: Option<usize>,
    #[arg(long, value_name = "N")]
    recovery_records: Option<usize>,
    /// Rows run concurrently; output order and values do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "sweep.csv", value_name = "PATH")]
    out: PathBuf,
}

/// The seeds inside `data`, `train` and `eval` are replaced by the row seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub data: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub alpha: f64,
    pub gen_label_acc: f64,
    pub label_recovery_acc: f64,
    pub seed: u64,
}

impl Row {
    pub fn line(&self) -> String {
        format!("{},{},{},{}", self.alpha, self.gen_label_acc, self.label_recovery_acc, self.seed)
    }
}

/// Data, corruption, training and both metrics for one labeled fraction.
/// Divergence yields NaN metrics; other errors abort the sweep.
pub fn run_row(cfg: &SweepConfig, alpha: f64, seed: u64) -> Result<RowOutcome> {
    let spec = cfg.data.spec();
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = generate_mixture(&spec, cfg.data.samples, &mut rng)?;
    let c = ChannelSpec::missing_uniform(spec.m, 1.0 - alpha)?.build()?;
    let corrupted = apply_channel(&clean, &c, &mut rng)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let outcome = match train(&tcfg, &corrupted, &TrainMode::Rcgan(c), &spec.priors, None) {
        Ok(o) => o,
        Err(e @ GanError::Diverged { .. }) => {
            let row = Row { alpha, gen_label_acc: f64::NAN, label_recovery_acc: f64::NAN, seed };
            return Ok((row, Some(e.to_string())));
        }
        Err(e) => return Err(e.into()),
    };
    let ecfg = EvalConfig { seed, ..cfg.eval.clone() };
    let results = metrics(&outcome.generator, &spec, Some(&clean), &ecfg)?;
    let row = Row { alpha, gen_label_acc: results[0].value, label_recovery_acc: results[1].value, seed };
    Ok((row, None))
}

/// A finished row and the divergence message, if training diverged.
type RowOutcome = (Row, Option<String>);

fn run_rows(cfg: &SweepConfig, jobs: usize) -> Result<Vec<RowOutcome>> {
    let n = cfg.alphas.len();
    let slots: Vec<Mutex<Option<Result<RowOutcome>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = run_row(cfg, cfg.alphas[i], cfg.seed.wrapping_add(i as u64));
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every row ran")).collect()
}

pub fn run(args: Args, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("sweep");
    let mut obj = load_object(args.config.as_deref())?;
    set(&mut obj, "alphas", args.alphas.clone());
    set(section(&mut obj, "data")?, "classes", args.classes);
    set(section(&mut obj, "data")?, "samples", args.samples);
    set(section(&mut obj, "train")?, "epochs", args.epochs);
    set(section(&mut obj, "eval")?, "gen_samples", args.gen_samples);
    set(section(&mut obj, "eval")?, "recovery_records", args.recovery_records);
    resolve_seed(&mut obj, args.seed)?;
    let cfg: SweepConfig = parse(Value::Object(obj), "sweep config")?;
    if let Some(a) = cfg.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        bail!("alpha {a} is outside (0, 1]: a fully unlabeled dataset has a singular channel");
    }
    cfg.train.validate()?;
    cfg.eval.recovery().validate()?;

    let rows = run_rows(&cfg, args.jobs)?;
    let mut file = std::fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(file, "{HEADER}")?;
    let mut diverged = 0;
    for (row, failure) in &rows {
        writeln!(file, "{}", row.line())?;
        println!("{}", row.line());
        if let Some(msg) = failure {
            eprintln!("alpha {} (seed {}): {msg}", row.alpha, row.seed);
            diverged += 1;
        }
    }
    file.flush()?;
    run.wrote(&args.out);
    let status = if diverged == 0 { Status::Success } else { Status::Incomplete };
    run.finish(&cfg, cfg.seed, status.code(), &args.out, manifest)?;
    Ok(status)
}
