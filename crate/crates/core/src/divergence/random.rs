//! Seeded generators for small random verification instances.

use super::{DiscreteJoint, FeatureMap};
use crate::channel::{ChannelSpec, ConfusionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

/// Upper limit on the per-class erasure mass of random channels.
pub const MAX_RANDOM_ERASURE: f64 = 0.9;

/// Uniform draw from the probability simplex of the given size.
fn flat_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// A joint over `support x labels` with mass only on the first `active` labels.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, support: usize, labels: usize, active: usize) -> DiscreteJoint {
    let weights = flat_simplex(rng, support * active);
    let mut probs = vec![0.0; support * labels];
    for x in 0..support {
        probs[x * labels..x * labels + active].copy_from_slice(&weights[x * active..(x + 1) * active]);
    }
    DiscreteJoint::new(support, labels, probs).expect("simplex draw is a distribution")
}

/// Two uncorrupted joints sharing the same X-marginal.
pub fn random_matched_pair<R: Rng + ?Sized>(
    rng: &mut R,
    support: usize,
    m: usize,
    labels: usize,
) -> (DiscreteJoint, DiscreteJoint) {
    let marginal = flat_simplex(rng, support);
    let draw = |rng: &mut R| {
        let mut probs = vec![0.0; support * labels];
        for (x, &px) in marginal.iter().enumerate() {
            for (y, w) in flat_simplex(rng, m).into_iter().enumerate() {
                probs[x * labels + y] = px * w;
            }
        }
        // renormalize away summation dust so the joint validates
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        DiscreteJoint::new(support, labels, probs).expect("valid joint")
    };
    let p = draw(rng);
    let q = draw(rng);
    (p, q)
}

/// Uniform alpha entries, rescaled per class to a total erasure mass drawn
/// uniformly from `[0, MAX_RANDOM_ERASURE]`.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, m: usize, m_tilde: usize) -> ChannelSpec {
    let mut alphas = vec![vec![0.0; m + m_tilde]; m_tilde];
    for i in 0..m {
        let raw: Vec<f64> = (0..m_tilde).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let target = rng.random::<f64>() * MAX_RANDOM_ERASURE;
        if total > 0.0 {
            for (u, r) in raw.iter().enumerate() {
                alphas[u][i] = r / total * target;
            }
        }
    }
    ChannelSpec { m, m_tilde, alphas }
}

/// Feature tables with entries uniform in `[-1, 1]`.
pub fn random_features<R: Rng + ?Sized>(rng: &mut R, support: usize, dim: usize) -> FeatureMap {
    let mut table = || (0..support * dim).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
    let psi = table();
    let psi_prime = table();
    FeatureMap::new(dim, psi, psi_prime).expect("finite features")
}

/// One randomized verification instance: two uncorrupted joints, a full-rank
/// channel and a projection feature map.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub support: usize,
    pub m: usize,
    pub m_tilde: usize,
    pub p: DiscreteJoint,
    pub q: DiscreteJoint,
    pub spec: ChannelSpec,
    pub channel: ConfusionMatrix,
    pub features: FeatureMap,
}

/// Upper limits on the size of random instances. Lower limits are fixed at
/// 2 support points, 2 classes, 1 uncertain label and feature dimension 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceLimits {
    pub max_support: usize,
    pub max_classes: usize,
    pub max_uncertain: usize,
    pub max_feature_dim: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        Self { max_support: 6, max_classes: 4, max_uncertain: 3, max_feature_dim: 4 }
    }
}

impl InstanceLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_support < 2 || self.max_classes < 2 || self.max_uncertain < 1 || self.max_feature_dim < 1 {
            return Err("limits must allow at least 2 points, 2 classes, 1 uncertain label, 1 feature".into());
        }
        Ok(())
    }
}

/// Random instance under the default limits.
pub fn random_instance(seed: u64) -> Instance {
    random_instance_with(seed, &InstanceLimits::default())
}

pub fn random_instance_with(seed: u64, limits: &InstanceLimits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = rng.random_range(2..=limits.max_support);
    let m = rng.random_range(2..=limits.max_classes);
    let m_tilde = rng.random_range(1..=limits.max_uncertain);
    let labels = m + m_tilde;
    let p = random_joint(&mut rng, support, labels, m);
    let q = random_joint(&mut rng, support, labels, m);
    let spec = random_channel(&mut rng, m, m_tilde);
    let channel = spec.build().expect("random channel is valid");
    let dim = rng.random_range(1..=limits.max_feature_dim);
    let features = random_features(&mut rng, support, dim);
    Instance { seed, support, m, m_tilde, p, q, spec, channel, features }
}
