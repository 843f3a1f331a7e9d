//! Pilot runs behind the training thresholds of the acceptance suite.
//!
//! `cargo run --release -p rcgan --example pilot [seeds]`
//!
//! For each seed: the corrupted-label run (8-mode mixture, 8000 samples, half
//! the labels missing) scored by generated label accuracy and label recovery
//! on 500 records, then the few-label run (40 labels) against the
//! labeled-only baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcgan::data::{apply_channel, few_label_split, generate_mixture, Dataset, MixtureSpec};
use rcgan::eval::{generated_label_accuracy, label_recovery_accuracy, BayesOracle, RecoveryOptions};
use rcgan::gan::{train, TrainConfig, TrainMode};
use rcgan::{ChannelSpec, ConfusionMatrix};
use std::time::Instant;

fn main() {
    let seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let spec = MixtureSpec::default_with_classes(8);
    let oracle = BayesOracle::new(spec.clone()).unwrap();
    let (mut few_sum, mut base_sum) = (0.0, 0.0);
    for seed in 0..seeds {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };

        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let clean = generate_mixture(&spec, 8000, &mut rng).unwrap();
        let c = ChannelSpec::missing_uniform(8, 0.5).unwrap().build().unwrap();
        let ds = apply_channel(&clean, &c, &mut rng).unwrap();
        let t = Instant::now();
        let out = train(&cfg, &ds, &TrainMode::Rcgan(c), &spec.priors, None).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let gen = generated_label_accuracy(&out.generator, &oracle, 10_000, &spec.priors, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        let mut truth = clean;
        truth.records.truncate(500);
        let rec = label_recovery_accuracy(&out.generator, &truth, &RecoveryOptions::default()).unwrap();
        println!("seed {seed} missing 0.5: gen {gen:.4} recovery {rec:.4} ({secs:.1}s)");

        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let clean = generate_mixture(&spec, 8000, &mut rng).unwrap();
        let few = few_label_split(&clean, 40, &mut rng).unwrap();
        let a = train(&cfg, &few, &TrainMode::Lambda, &spec.priors, None).unwrap();
        let labeled = Dataset { dim: 2, m: 8, records: few.labeled().cloned().collect(), channel: None };
        let b = train(&cfg, &labeled, &TrainMode::Rcgan(ConfusionMatrix::identity(8, 0)), &spec.priors, None).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let ga = generated_label_accuracy(&a.generator, &oracle, 10_000, &spec.priors, &mut r).unwrap();
        let gb = generated_label_accuracy(&b.generator, &oracle, 10_000, &spec.priors, &mut r).unwrap();
        println!("seed {seed} 40 labels: lambda {ga:.4} labeled-only {gb:.4}");
        few_sum += ga;
        base_sum += gb;
    }
    let n = seeds as f64;
    println!("mean lambda {:.4} labeled-only {:.4} margin {:.4}", few_sum / n, base_sum / n, (few_sum - base_sum) / n);
}
