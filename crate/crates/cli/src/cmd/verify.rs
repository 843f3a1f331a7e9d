use crate::config::{load_object, parse, resolve_seed, set};
use crate::manifest::{write_json, Run};
use crate::Status;
use anyhow::{bail, Result};
use rcgan::divergence::{run_bound_sweep, InstanceLimits, SweepOptions, VerifyOptions};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(clap::Args)]
pub struct Args {
    /// Number of random instances.
    #[arg(long)]
    trials: Option<u64>,
    /// Base seed; instance `i` uses `seed + i`. Falls back to RCGAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest X support size.
    #[arg(long)]
    max_support: Option<usize>,
    /// Largest number of classes.
    #[arg(long)]
    max_classes: Option<usize>,
    /// Largest number of uncertain labels.
    #[arg(long)]
    max_uncertain: Option<usize>,
    /// Largest feature dimension for the projection chain.
    #[arg(long)]
    max_feature_dim: Option<usize>,
    /// Replace every channel by the identity.
    #[arg(long)]
    force_identity: bool,
    /// JSON file with any of the settings above.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Report: one JSON entry per checked chain.
    #[arg(long, default_value = "bound_report.json", value_name = "PATH")]
    report: PathBuf,
    #[arg(long, hide = true)]
    kappa_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifyConfig {
    trials: u64,
    seed: u64,
    max_support: usize,
    max_classes: usize,
    max_uncertain: usize,
    max_feature_dim: usize,
    force_identity: bool,
    /// Allowed relative violation of each inequality.
    tol: f64,
    kappa_scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let limits = InstanceLimits::default();
        let verify = VerifyOptions::default();
        Self {
            trials: 1000,
            seed: 0,
            max_support: limits.max_support,
            max_classes: limits.max_classes,
            max_uncertain: limits.max_uncertain,
            max_feature_dim: limits.max_feature_dim,
            force_identity: false,
            tol: verify.tol,
            kappa_scale: verify.kappa_scale,
        }
    }
}

pub fn run(args: Args, manifest: Option<&Path>) -> Result<Status> {
    let mut run = Run::start("verify-bounds");
    let mut obj = load_object(args.config.as_deref())?;
    set(&mut obj, "trials", args.trials);
    set(&mut obj, "max_support", args.max_support);
    set(&mut obj, "max_classes", args.max_classes);
    set(&mut obj, "max_uncertain", args.max_uncertain);
    set(&mut obj, "max_feature_dim", args.max_feature_dim);
    set(&mut obj, "kappa_scale", args.kappa_scale);
    if args.force_identity {
        obj.insert("force_identity".into(), true.into());
    }
    resolve_seed(&mut obj, args.seed)?;
    let cfg: VerifyConfig = parse(Value::Object(obj), "verify-bounds config")?;
    if cfg.trials == 0 {
        bail!("trials must be at least 1");
    }
    let opts = SweepOptions {
        trials: cfg.trials,
        seed: cfg.seed,
        limits: InstanceLimits {
            max_support: cfg.max_support,
            max_classes: cfg.max_classes,
            max_uncertain: cfg.max_uncertain,
            max_feature_dim: cfg.max_feature_dim,
        },
        force_identity: cfg.force_identity,
        verify: VerifyOptions { tol: cfg.tol, kappa_scale: cfg.kappa_scale, ..VerifyOptions::default() },
    };
    let summary = run_bound_sweep(&opts)?;
    write_json(&summary.entries, &args.report)?;
    run.wrote(&args.report);

    let gating = summary.entries.iter().filter(|e| e.gating).count();
    println!("{gating} chains over {} instances", cfg.trials);
    for family in ["theorem1", "theorem2", "corollary1", "corollary2"] {
        if let Some(s) = summary.worst_slack(family) {
            println!("  {family:<11} worst slack {s:.3e}");
        }
    }
    if let Some(w) = summary.worst() {
        println!("worst slack {:.3e} ({}, instance seed {})", w.slack, w.name, w.instance_seed);
    }
    let failures: Vec<_> = summary.failures().collect();
    let status = if failures.is_empty() {
        println!("all chains hold");
        Status::Success
    } else {
        for f in failures.iter().take(20) {
            eprintln!(
                "FAILED {} at instance seed {}: lhs {:.6e} mid {:.6e} rhs {:.6e} kappa {:.6} slack {:.3e}",
                f.name, f.instance_seed, f.chain[0], f.chain[1], f.chain[2], f.kappa, f.slack
            );
        }
        if failures.len() > 20 {
            eprintln!("... {} more", failures.len() - 20);
        }
        eprintln!("{} of {gating} chains failed", failures.len());
        Status::Failed
    };
    run.finish(&cfg, cfg.seed, status.code(), &args.report, manifest)?;
    Ok(status)
}
