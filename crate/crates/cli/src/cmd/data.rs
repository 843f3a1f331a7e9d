use crate::config::{load_object, load_typed, parse, resolve_seed, set, Object};
use crate::manifest::{write_json, Run};
use crate::Status;
use anyhow::{bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcgan::data::{apply_channel, few_label_split, generate_mixture, read_dataset, write_dataset, MixtureSpec};
use rcgan::ChannelSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(clap::Args)]
pub struct GenArgs {
    /// Number of classes (components on a circle).
    #[arg(long)]
    classes: Option<usize>,
    /// Number of records.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// Per-class standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with any of the settings above, or a full `mixture` object.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long, default_value = "data.csv", value_name = "PATH")]
    out: PathBuf,
    /// Mixture spec JSON, needed by `corrupt`, `train` and `eval`.
    #[arg(long, default_value = "mixture.json", value_name = "PATH")]
    mixture_out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub classes: usize,
    pub samples: usize,
    pub radius: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Used verbatim instead of the circle layout.
    pub mixture: Option<MixtureSpec>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { classes: 8, samples: 8000, radius: 5.0, sigma: 0.5, seed: 0, mixture: None }
    }
}

impl GenConfig {
    pub fn spec(&self) -> MixtureSpec {
        self.mixture.clone().unwrap_or_else(|| MixtureSpec::circle(self.classes, self.radius, self.sigma))
    }
}

pub fn gen(args: GenArgs, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("gen-data");
    let mut obj = load_object(args.config.as_deref())?;
    set(&mut obj, "classes", args.classes);
    set(&mut obj, "samples", args.samples);
    set(&mut obj, "radius", args.radius);
    set(&mut obj, "sigma", args.sigma);
    resolve_seed(&mut obj, args.seed)?;
    let cfg: GenConfig = parse(Value::Object(obj), "gen-data config")?;
    let spec = cfg.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ds = generate_mixture(&spec, cfg.samples, &mut rng)?;
    write_dataset(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    run.wrote(&args.out);
    write_json(&spec, &args.mixture_out)?;
    run.wrote(&args.mixture_out);
    println!("{} records over {} classes in {} dimensions", ds.len(), spec.m, spec.dim);
    run.finish(&cfg, cfg.seed, 0, &args.out, manifest)?;
    Ok(Status::Success)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Every label independently passes through a channel.
    ApplyChannel,
    /// Exactly n_labels / m labels survive per class; the rest are missing.
    FewLabel,
}

#[derive(clap::Args)]
pub struct CorruptArgs {
    /// Clean dataset CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Mixture spec JSON of the dataset.
    #[arg(long, value_name = "PATH")]
    mixture: PathBuf,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// apply-channel: channel spec JSON `{m, m_tilde, alphas}`.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["missing_prob", "complementary_prob"])]
    channel: Option<PathBuf>,
    /// apply-channel: each label goes missing with this probability.
    #[arg(long, value_name = "P", conflicts_with = "complementary_prob")]
    missing_prob: Option<f64>,
    /// apply-channel: each label is replaced by "not class y" with this probability.
    #[arg(long, value_name = "P")]
    complementary_prob: Option<f64>,
    /// few-label: total labels kept, a multiple of the class count.
    #[arg(long, value_name = "N")]
    n_labels: Option<usize>,
    /// Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Corrupted dataset CSV.
    #[arg(long, default_value = "corrupted.csv", value_name = "PATH")]
    out: PathBuf,
    /// Spec of the channel behind the observed labels.
    #[arg(long, default_value = "channel.json", value_name = "PATH")]
    channel_out: PathBuf,
}

#[derive(Serialize)]
struct CorruptRecord {
    protocol: Protocol,
    data: String,
    mixture: String,
    channel: Option<ChannelSpec>,
    n_labels: Option<usize>,
    seed: u64,
}

pub fn corrupt(args: CorruptArgs, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("corrupt");
    let mut obj = Object::new();
    resolve_seed(&mut obj, args.seed)?;
    let seed = obj.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let spec: MixtureSpec = load_typed(&args.mixture)?;
    spec.validate()?;
    let clean = read_dataset(&args.data, spec.m, None).with_context(|| format!("reading {}", args.data.display()))?;
    ensure!(clean.dim == spec.dim, "dataset has {} columns, mixture dimension is {}", clean.dim, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (channel, n_labels, corrupted) = match args.protocol {
        Protocol::ApplyChannel => {
            if args.n_labels.is_some() {
                bail!("--n-labels belongs to --protocol few-label");
            }
            let channel = match (&args.channel, args.missing_prob, args.complementary_prob) {
                (Some(path), None, None) => load_typed::<ChannelSpec>(path)?,
                (None, Some(p), None) => ChannelSpec::missing_uniform(spec.m, p)?,
                (None, None, Some(p)) => ChannelSpec::complementary(spec.m, p)?,
                _ => bail!("--protocol apply-channel needs one of --channel, --missing-prob, --complementary-prob"),
            };
            let c = channel.build()?;
            let ds = apply_channel(&clean, &c, &mut rng)?;
            println!("protocol apply-channel: each label corrupted independently");
            (Some(channel), None, ds)
        }
        Protocol::FewLabel => {
            if args.channel.is_some() || args.missing_prob.is_some() || args.complementary_prob.is_some() {
                bail!("--protocol few-label takes only --n-labels");
            }
            let Some(n) = args.n_labels else { bail!("--protocol few-label needs --n-labels") };
            let ds = few_label_split(&clean, n, &mut rng)?;
            println!("protocol few-label: {} labels per class kept", n / spec.m);
            (None, Some(n), ds)
        }
    };
    write_dataset(&corrupted, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    run.wrote(&args.out);
    let attached = corrupted.channel.clone().expect("corruption attaches a channel");
    write_json(&attached, &args.channel_out)?;
    run.wrote(&args.channel_out);
    let labeled = corrupted.labeled().count();
    println!("{labeled} of {} records keep a class label", corrupted.len());
    let record = CorruptRecord {
        protocol: args.protocol,
        data: args.data.display().to_string(),
        mixture: args.mixture.display().to_string(),
        channel,
        n_labels,
        seed,
    };
    run.finish(&record, seed, 0, &args.out, manifest)?;
    Ok(Status::Success)
}
