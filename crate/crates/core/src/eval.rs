//! Conditional-generation metrics scored against the exact Bayes classifier
//! of a synthetic mixture.

use crate::data::{sample_class, DataError, Dataset, MixtureSpec};
use crate::gan::ConditionalGenerator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Minimum accuracy the oracle must reach on fresh samples.
pub const ORACLE_MIN_ACCURACY: f64 = 0.999;
pub const ORACLE_SELF_TEST_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("oracle self-test failed: accuracy {accuracy} < {ORACLE_MIN_ACCURACY}")]
    OracleTooWeak { accuracy: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("empty dataset")]
    Empty,
    #[error("non-finite reconstruction loss for candidate {label}")]
    NonFinite { label: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Posterior-argmax classifier of an isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesOracle {
    spec: MixtureSpec,
    /// `ln pi_y - dim * ln sigma_y`, the label-dependent constant of the log joint.
    offsets: Vec<f64>,
}

impl BayesOracle {
    pub fn new(spec: MixtureSpec) -> Result<Self, EvalError> {
        spec.validate()?;
        let dim = spec.dim as f64;
        let offsets = spec.priors.iter().zip(&spec.sigma).map(|(p, s)| p.ln() - dim * s.ln()).collect();
        Ok(Self { spec, offsets })
    }

    /// Builds the oracle and rejects it unless it reaches
    /// [`ORACLE_MIN_ACCURACY`] on fresh samples.
    pub fn certified<R: Rng + ?Sized>(spec: MixtureSpec, rng: &mut R) -> Result<Self, EvalError> {
        let oracle = Self::new(spec)?;
        let accuracy = oracle.self_test(ORACLE_SELF_TEST_SAMPLES, rng);
        if accuracy < ORACLE_MIN_ACCURACY {
            return Err(EvalError::OracleTooWeak { accuracy });
        }
        Ok(oracle)
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    /// Log joint density of `(x, y)` up to a label-independent constant.
    pub fn log_joint(&self, x: &[f64], y: usize) -> f64 {
        let s = self.spec.sigma[y];
        let sq: f64 = x.iter().zip(&self.spec.means[y]).map(|(a, b)| (a - b) * (a - b)).sum();
        self.offsets[y] - sq / (2.0 * s * s)
    }

    /// `argmax_y P(y | x)`, lowest index on ties.
    pub fn classify(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for y in 0..self.spec.m {
            if self.spec.priors[y] == 0.0 {
                continue;
            }
            let v = self.log_joint(x, y);
            if v > best.1 {
                best = (y, v);
            }
        }
        best.0
    }

    /// Accuracy on `n` fresh samples from the mixture.
    pub fn self_test<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        let ds = crate::data::generate_mixture(&self.spec, n, rng).expect("spec validated at construction");
        let hits = ds.records.iter().filter(|r| self.classify(&r.x) == r.label).count();
        hits as f64 / n.max(1) as f64
    }
}

fn check_generator<G: ConditionalGenerator + ?Sized>(g: &G, m: usize, dim: usize) -> Result<(), EvalError> {
    if g.class_count() != m || g.output_dim() != dim {
        return Err(EvalError::Shape(format!(
            "generator has {} classes and output dim {}, expected {m} and {dim}",
            g.class_count(),
            g.output_dim()
        )));
    }
    Ok(())
}

/// Fraction of `n` generated samples `G(z; y)`, `y ~ priors`, that the oracle
/// assigns to their conditioning class.
pub fn generated_label_accuracy<G: ConditionalGenerator + ?Sized, R: Rng + ?Sized>(
    g: &G,
    oracle: &BayesOracle,
    n: usize,
    priors: &[f64],
    rng: &mut R,
) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::Options("n must be at least 1".into()));
    }
    check_generator(g, oracle.spec.m, oracle.spec.dim)?;
    if priors.len() != oracle.spec.m {
        return Err(EvalError::Shape(format!("{} priors for {} classes", priors.len(), oracle.spec.m)));
    }
    let mut hits = 0usize;
    for _ in 0..n {
        let y = sample_class(priors, rng);
        let z: Vec<f64> = (0..g.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
        if oracle.classify(&g.generate(&z, y)) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Latent-search settings for label recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryOptions {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Each latent coordinate is projected onto `[-z_bound, z_bound]` after
    /// every step; `None` leaves the search unconstrained.
    pub z_bound: Option<f64>,
    /// Record `i` draws its restarts from a stream seeded with `seed + i`.
    pub seed: u64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { restarts: 5, steps: 200, step_size: 0.05, z_bound: Some(3.0), seed: 0 }
    }
}

impl RecoveryOptions {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.restarts == 0 || self.steps == 0 {
            return Err(EvalError::Options("restarts and steps must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(EvalError::Options(format!("step_size must be positive, got {}", self.step_size)));
        }
        if let Some(b) = self.z_bound {
            if !(b > 0.0) {
                return Err(EvalError::Options(format!("z_bound must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

/// Smallest `||G(z; y) - x||^2` reached by projected gradient descent from
/// the given starting points.
fn best_reconstruction<G: ConditionalGenerator + ?Sized>(
    g: &G,
    x: &[f64],
    y: usize,
    starts: &[Vec<f64>],
    opts: &RecoveryOptions,
) -> Result<f64, EvalError> {
    let mut best = f64::INFINITY;
    for start in starts {
        let mut z = start.clone();
        let mut loss = f64::INFINITY;
        for step in 0..=opts.steps {
            let (out, grad) = g.generate_with_latent_grad(&z, y, &mut |out| {
                out.iter().zip(x).map(|(o, t)| 2.0 * (o - t)).collect()
            });
            loss = out.iter().zip(x).map(|(o, t)| (o - t) * (o - t)).sum();
            if !loss.is_finite() {
                return Err(EvalError::NonFinite { label: y });
            }
            if step == opts.steps {
                break;
            }
            for (zi, gi) in z.iter_mut().zip(&grad) {
                *zi -= opts.step_size * gi;
                if let Some(b) = opts.z_bound {
                    *zi = zi.clamp(-b, b);
                }
            }
        }
        best = best.min(loss);
    }
    Ok(best)
}

/// For each class, minimizes the reconstruction error over the latent input
/// and returns the class with the smallest error (lowest index on ties).
/// Every class starts from the same `opts.restarts` standard-normal points.
pub fn recover_label<G: ConditionalGenerator + ?Sized, R: Rng + ?Sized>(
    g: &G,
    x: &[f64],
    opts: &RecoveryOptions,
    rng: &mut R,
) -> Result<usize, EvalError> {
    opts.validate()?;
    if x.len() != g.output_dim() {
        return Err(EvalError::Shape(format!("x has dimension {}, generator {}", x.len(), g.output_dim())));
    }
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|_| {
            (0..g.latent_dim())
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    opts.z_bound.map_or(v, |b| v.clamp(-b, b))
                })
                .collect()
        })
        .collect();
    let mut best = (0, f64::INFINITY);
    for y in 0..g.class_count() {
        let loss = best_reconstruction(g, x, y, &starts, opts)?;
        if loss < best.1 {
            best = (y, loss);
        }
    }
    Ok(best.0)
}

/// Fraction of records whose recovered label equals the stored ground-truth
/// label. Record `i` uses its own stream seeded with `opts.seed + i`.
pub fn label_recovery_accuracy<G: ConditionalGenerator + ?Sized>(
    g: &G,
    truth: &Dataset,
    opts: &RecoveryOptions,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    check_generator(g, truth.m, truth.dim)?;
    if let Some(r) = truth.records.iter().find(|r| r.label >= truth.m) {
        return Err(EvalError::Shape(format!("record label {} is not a ground-truth class", r.label)));
    }
    let mut hits = 0usize;
    for (i, r) in truth.records.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        if recover_label(g, &r.x, opts, &mut rng)? == r.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// One metric value with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
    pub opts: serde_json::Value,
}

pub fn write_results(results: &[MetricResult], path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<MetricResult>, EvalError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_mixture;

    /// `G(z; y) = mean_y + scale * z` in 2-D.
    struct Shifted {
        means: Vec<Vec<f64>>,
        scale: f64,
        blind: bool,
    }

    impl ConditionalGenerator for Shifted {
        fn latent_dim(&self) -> usize {
            2
        }
        fn class_count(&self) -> usize {
            self.means.len()
        }
        fn output_dim(&self) -> usize {
            2
        }
        fn generate(&self, z: &[f64], y: usize) -> Vec<f64> {
            let mean = &self.means[if self.blind { 1 } else { y }];
            mean.iter().zip(z).map(|(m, z)| m + self.scale * z).collect()
        }
        fn generate_with_latent_grad(
            &self,
            z: &[f64],
            y: usize,
            upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        ) -> (Vec<f64>, Vec<f64>) {
            let out = self.generate(z, y);
            let grad = upstream(&out).iter().map(|g| g * self.scale).collect();
            (out, grad)
        }
    }

    fn spec4() -> MixtureSpec {
        MixtureSpec::default_with_classes(4)
    }

    #[test]
    fn oracle_passes_self_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in [4, 8] {
            assert!(BayesOracle::certified(MixtureSpec::default_with_classes(m), &mut rng).is_ok());
        }
        let blurry = MixtureSpec::circle(8, 1.0, 1.0);
        assert!(matches!(BayesOracle::certified(blurry, &mut rng), Err(EvalError::OracleTooWeak { .. })));
    }

    #[test]
    fn oracle_ties_go_to_lowest_index() {
        let oracle = BayesOracle::new(spec4()).unwrap();
        // the origin is equidistant from all four means
        assert_eq!(oracle.classify(&[0.0, 0.0]), 0);
        assert_eq!(oracle.classify(&[5.0, 0.1]), 0);
        assert_eq!(oracle.classify(&[0.1, 5.0]), 1);
    }

    #[test]
    fn cheating_and_blind_generators() {
        let spec = spec4();
        let oracle = BayesOracle::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cheat = Shifted { means: spec.means.clone(), scale: 0.0, blind: false };
        assert_eq!(generated_label_accuracy(&cheat, &oracle, 1000, &spec.priors, &mut rng).unwrap(), 1.0);
        let blind = Shifted { means: spec.means.clone(), scale: 0.5, blind: true };
        let acc = generated_label_accuracy(&blind, &oracle, 20_000, &spec.priors, &mut rng).unwrap();
        assert!((acc - 0.25).abs() < 0.015, "{acc}");
    }

    #[test]
    fn recovery_on_toy_generators() {
        let spec = spec4();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = generate_mixture(&spec, 400, &mut rng).unwrap();
        // bounded search: z in [-1, 1]^2 reaches 1 unit around each mean
        let opts = RecoveryOptions { z_bound: Some(1.0), steps: 100, step_size: 0.2, ..RecoveryOptions::default() };
        let toy = Shifted { means: spec.means.clone(), scale: 1.0, blind: false };
        let acc = label_recovery_accuracy(&toy, &truth, &opts).unwrap();
        assert!(acc > 0.99, "{acc}");
        let blind = Shifted { means: spec.means.clone(), scale: 1.0, blind: true };
        let acc = label_recovery_accuracy(&blind, &truth, &opts).unwrap();
        let zeros = truth.records.iter().filter(|r| r.label == 0).count() as f64 / 400.0;
        assert_eq!(acc, zeros);
        assert!((acc - 0.25).abs() < 0.06);
    }

    #[test]
    fn zero_loss_witness_is_recovered() {
        let spec = spec4();
        let toy = Shifted { means: spec.means.clone(), scale: 1.0, blind: false };
        let opts = RecoveryOptions::default();
        let x = toy.generate(&[0.4, -0.3], 2);
        assert_eq!(recover_label(&toy, &x, &opts, &mut ChaCha8Rng::seed_from_u64(3)).unwrap(), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = spec4();
        let toy = Shifted { means: spec.means.clone(), scale: 1.0, blind: false };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bad = RecoveryOptions { restarts: 0, ..RecoveryOptions::default() };
        assert!(recover_label(&toy, &[0.0, 0.0], &bad, &mut rng).is_err());
        assert!(recover_label(&toy, &[0.0], &RecoveryOptions::default(), &mut rng).is_err());
        let empty = Dataset { dim: 2, m: 4, records: vec![], channel: None };
        assert!(matches!(label_recovery_accuracy(&toy, &empty, &RecoveryOptions::default()), Err(EvalError::Empty)));
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let results = vec![MetricResult {
            metric: "gen_label_acc".into(),
            value: 0.123456789,
            n: 10,
            seed: 3,
            opts: serde_json::to_value(RecoveryOptions::default()).unwrap(),
        }];
        write_results(&results, &path).unwrap();
        assert_eq!(read_results(&path).unwrap(), results);
    }
}
