//! Exact divergences between finite joint distributions over `X x labels`.
//!
//! Everything here is computed in closed form by enumeration; there is no
//! sampling or iterative optimization. Logarithms are natural.

mod random;
mod sweep;
mod verify;

pub use random::{
    random_channel, random_features, random_instance, random_instance_with, random_joint, random_matched_pair,
    Instance, InstanceLimits,
};
pub use sweep::{run_bound_sweep, SweepEntry, SweepOptions, SweepSummary};
pub use verify::{
    assumption1_closure_check, sample_complexity_bound, verify_corollaries, verify_theorem1, verify_theorem2,
    BoundReport, CorollaryKind, SampleBound, VerifyOptions,
};

use crate::channel::{ChannelError, ConfusionMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid joint distribution: {0}")]
    InvalidJoint(String),
    #[error("invalid feature map: {0}")]
    InvalidFeatures(String),
    #[error("cannot build an empirical distribution from zero samples")]
    EmptySamples,
    #[error("sample {index} = ({x}, {label}) is outside the {support}x{labels} grid")]
    SampleOutOfRange { index: usize, x: usize, label: usize, support: usize, labels: usize },
    #[error("{0} places mass on uncertain labels")]
    NotUncorrupted(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// A probability table over `support x labels`, row-major by support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    support: usize,
    labels: usize,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(support: usize, labels: usize, probs: Vec<f64>) -> Result<Self, DivergenceError> {
        if support == 0 || labels == 0 {
            return Err(DivergenceError::InvalidJoint("empty grid".into()));
        }
        if probs.len() != support * labels {
            return Err(DivergenceError::InvalidJoint(format!(
                "expected {} entries, got {}",
                support * labels,
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(DivergenceError::InvalidJoint(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(DivergenceError::InvalidJoint(format!("total mass is {total}")));
        }
        Ok(Self { support, labels, probs })
    }

    /// Point mass at `(x, label)`.
    pub fn point(support: usize, labels: usize, x: usize, label: usize) -> Self {
        let mut probs = vec![0.0; support * labels];
        probs[x * labels + label] = 1.0;
        Self { support, labels, probs }
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, label: usize) -> f64 {
        self.probs[x * self.labels + label]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.labels..(x + 1) * self.labels]
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        (0..self.support).map(|x| self.row(x).iter().sum()).collect()
    }

    /// True when no mass sits on labels `>= m`.
    pub fn is_uncorrupted(&self, m: usize) -> bool {
        (0..self.support).all(|x| self.row(x)[m.min(self.labels)..].iter().all(|&p| p == 0.0))
    }

    fn same_shape(&self, other: &Self) -> Result<(), DivergenceError> {
        if self.support != other.support || self.labels != other.labels {
            return Err(DivergenceError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.support, self.labels, other.support, other.labels
            )));
        }
        Ok(())
    }
}

/// Feature tables `psi(x)` and `psi'(x)` evaluated on every support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    dim: usize,
    psi: Vec<f64>,
    psi_prime: Vec<f64>,
}

impl FeatureMap {
    /// `psi` and `psi_prime` are `support x dim`, row-major.
    pub fn new(dim: usize, psi: Vec<f64>, psi_prime: Vec<f64>) -> Result<Self, DivergenceError> {
        if dim == 0 {
            return Err(DivergenceError::InvalidFeatures("feature dimension must be >= 1".into()));
        }
        if psi.len() != psi_prime.len() || !psi.len().is_multiple_of(dim) {
            return Err(DivergenceError::InvalidFeatures(format!(
                "tables of length {} and {} do not match dimension {dim}",
                psi.len(),
                psi_prime.len()
            )));
        }
        if psi.iter().chain(&psi_prime).any(|v| !v.is_finite()) {
            return Err(DivergenceError::InvalidFeatures("non-finite feature value".into()));
        }
        Ok(Self { dim, psi, psi_prime })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> usize {
        self.psi.len() / self.dim
    }

    pub fn psi(&self, x: usize) -> &[f64] {
        &self.psi[x * self.dim..(x + 1) * self.dim]
    }

    pub fn psi_prime(&self, x: usize) -> &[f64] {
        &self.psi_prime[x * self.dim..(x + 1) * self.dim]
    }
}

/// `P~(x, u) = sum_y P(x, y) T[y][u]` for any row-stochastic `n x n` matrix `T`.
pub fn push_through_matrix(p: &DiscreteJoint, t: &[f64]) -> Result<DiscreteJoint, DivergenceError> {
    let n = p.labels;
    if t.len() != n * n {
        return Err(DivergenceError::ShapeMismatch(format!(
            "joint has {n} labels but the channel has {} entries",
            t.len()
        )));
    }
    let mut probs = vec![0.0; p.probs.len()];
    for x in 0..p.support {
        let row = p.row(x);
        let out = &mut probs[x * n..(x + 1) * n];
        for (y, &mass) in row.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (u, slot) in out.iter_mut().enumerate() {
                *slot += mass * t[y * n + u];
            }
        }
    }
    Ok(DiscreteJoint { support: p.support, labels: n, probs })
}

/// Distribution of `(x, observed label)` when labels of `P` pass through `C`.
pub fn push_through(p: &DiscreteJoint, c: &ConfusionMatrix) -> Result<DiscreteJoint, DivergenceError> {
    push_through_matrix(p, c.entries())
}

/// Total variation distance `(1/2) sum |P - Q|`.
pub fn tv(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64, DivergenceError> {
    p.same_shape(q)?;
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Kullback-Leibler divergence; `+inf` when `P` is not absolutely continuous w.r.t. `Q`.
pub fn kl(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64, DivergenceError> {
    p.same_shape(q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => a * (a / b).ln(),
        })
        .sum())
}

/// Jensen-Shannon divergence in nats, always in `[0, ln 2]`.
pub fn js(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64, DivergenceError> {
    p.same_shape(q)?;
    let half_kl = |a: f64, mid: f64| if a > 0.0 { a * (a / mid).ln() } else { 0.0 };
    let total: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| {
            let mid = 0.5 * (a + b);
            half_kl(a, mid) + half_kl(b, mid)
        })
        .sum();
    Ok((0.5 * total).max(0.0))
}

/// Supremum of `E_P[D] - E_Q[D]` over projection discriminators
/// `D(x, y) = V[y] . psi(x) + v . psi'(x)` with every entry of `V` and `v` in `[-1, 1]`.
///
/// The objective is linear in `(V, v)`, so the supremum over the box is the
/// l1-norm of its coefficients.
pub fn projection_nn_distance(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    features: &FeatureMap,
) -> Result<f64, DivergenceError> {
    p.same_shape(q)?;
    if features.support() != p.support {
        return Err(DivergenceError::ShapeMismatch(format!(
            "feature map covers {} points, joints have {}",
            features.support(),
            p.support
        )));
    }
    let (class_coeffs, marginal_coeffs) = projection_coefficients(p, q, features);
    Ok(class_coeffs.iter().chain(&marginal_coeffs).map(|c| c.abs()).sum())
}

/// Coefficients of `V` (labels x dim, row-major) and `v` in `E_P[D] - E_Q[D]`.
pub(crate) fn projection_coefficients(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    features: &FeatureMap,
) -> (Vec<f64>, Vec<f64>) {
    let d = features.dim();
    let mut class_coeffs = vec![0.0; p.labels * d];
    let mut marginal_coeffs = vec![0.0; d];
    for x in 0..p.support {
        let psi = features.psi(x);
        let psi_prime = features.psi_prime(x);
        let mut marginal_gap = 0.0;
        for u in 0..p.labels {
            let gap = p.get(x, u) - q.get(x, u);
            marginal_gap += gap;
            if gap != 0.0 {
                for (c, f) in class_coeffs[u * d..(u + 1) * d].iter_mut().zip(psi) {
                    *c += gap * f;
                }
            }
        }
        for (c, f) in marginal_coeffs.iter_mut().zip(psi_prime) {
            *c += marginal_gap * f;
        }
    }
    (class_coeffs, marginal_coeffs)
}

/// Normalized frequency table of `(x index, label)` samples.
pub fn empirical_joint(
    samples: &[(usize, usize)],
    support: usize,
    labels: usize,
) -> Result<DiscreteJoint, DivergenceError> {
    if samples.is_empty() {
        return Err(DivergenceError::EmptySamples);
    }
    let mut counts = vec![0u64; support * labels];
    for (index, &(x, label)) in samples.iter().enumerate() {
        if x >= support || label >= labels {
            return Err(DivergenceError::SampleOutOfRange { index, x, label, support, labels });
        }
        counts[x * labels + label] += 1;
    }
    let n = samples.len() as f64;
    let probs = counts.into_iter().map(|c| c as f64 / n).collect();
    DiscreteJoint::new(support, labels, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_missing(alpha: f64) -> ConfusionMatrix {
        ChannelSpec::missing_uniform(2, alpha).unwrap().build().unwrap()
    }

    #[test]
    fn joint_validation() {
        assert!(DiscreteJoint::new(1, 2, vec![0.5, 0.4]).is_err());
        assert!(DiscreteJoint::new(1, 2, vec![1.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(2, 2, vec![1.0]).is_err());
        let p = DiscreteJoint::new(1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        assert!(p.is_uncorrupted(2));
        assert!(!DiscreteJoint::point(1, 3, 0, 2).is_uncorrupted(2));
    }

    #[test]
    fn push_uniform_pair_through_missing() {
        let p = DiscreteJoint::new(1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        let pushed = push_through(&p, &uniform_missing(0.5)).unwrap();
        assert_eq!(pushed.probs(), &[0.25, 0.25, 0.5]);
        let same = push_through(&p, &ConfusionMatrix::identity(2, 1)).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn push_point_through_complementary() {
        let c = ChannelSpec::complementary(2, 1.0).unwrap().build().unwrap();
        let p = DiscreteJoint::point(1, 4, 0, 0);
        // class 0 becomes "not class 1", i.e. u_1 = label 3
        assert_eq!(push_through(&p, &c).unwrap(), DiscreteJoint::point(1, 4, 0, 3));
        let wrong = DiscreteJoint::point(1, 3, 0, 0);
        assert!(matches!(push_through(&wrong, &c), Err(DivergenceError::ShapeMismatch(_))));
    }

    #[test]
    fn tv_examples() {
        let p = DiscreteJoint::point(1, 3, 0, 0);
        let q = DiscreteJoint::point(1, 3, 0, 1);
        assert_eq!(tv(&p, &p).unwrap(), 0.0);
        assert_eq!(tv(&p, &q).unwrap(), 1.0);
        let c = uniform_missing(0.5);
        let tv_pushed = tv(&push_through(&p, &c).unwrap(), &push_through(&q, &c).unwrap()).unwrap();
        assert_eq!(tv_pushed, 0.5);
        assert_eq!(c.kappa().unwrap().kappa * tv_pushed, 1.0);
        assert!(tv(&p, &DiscreteJoint::point(2, 3, 0, 0)).is_err());
    }

    #[test]
    fn js_examples() {
        let p = DiscreteJoint::point(1, 3, 0, 0);
        let q = DiscreteJoint::point(1, 3, 0, 1);
        assert_eq!(js(&p, &p).unwrap(), 0.0);
        assert!((js(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let c = uniform_missing(0.5);
        let js_pushed = js(&push_through(&p, &c).unwrap(), &push_through(&q, &c).unwrap()).unwrap();
        assert!((js_pushed - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
        let upper = 2.0 * (8.0 * js_pushed).sqrt();
        assert!((upper - 3.330_218_444).abs() < 1e-6);
        assert_eq!(kl(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn projection_distance_examples() {
        let p = DiscreteJoint::point(1, 3, 0, 0);
        let q = DiscreteJoint::point(1, 3, 0, 1);
        let f = FeatureMap::new(1, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(projection_nn_distance(&p, &p, &f).unwrap(), 0.0);
        assert_eq!(projection_nn_distance(&p, &q, &f).unwrap(), 2.0);
        let c = uniform_missing(0.5);
        let pushed =
            projection_nn_distance(&push_through(&p, &c).unwrap(), &push_through(&q, &c).unwrap(), &f).unwrap();
        assert_eq!(pushed, 1.0);
        assert_eq!(c.kappa().unwrap().kappa_prime * pushed, 3.0);

        let short = FeatureMap::new(1, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(projection_nn_distance(&p, &q, &short).is_err());
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_joint(&[(0, 1), (0, 1)], 1, 3).unwrap(), DiscreteJoint::point(1, 3, 0, 1));
        let e = empirical_joint(&[(0, 1), (1, 2)], 2, 3).unwrap();
        assert_eq!(e.get(0, 1), 0.5);
        assert_eq!(e.get(1, 2), 0.5);
        assert_eq!(empirical_joint(&[], 2, 3), Err(DivergenceError::EmptySamples));
        assert!(matches!(
            empirical_joint(&[(0, 0), (2, 0)], 2, 3),
            Err(DivergenceError::SampleOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn empirical_concentrates() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = random_joint(&mut rng, 4, 3, 3);
        let n = 100_000;
        let samples: Vec<(usize, usize)> = (0..n)
            .map(|_| {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &p) in truth.probs().iter().enumerate() {
                    acc += p;
                    if r < acc {
                        return (i / 3, i % 3);
                    }
                }
                (3, 2)
            })
            .collect();
        let emp = empirical_joint(&samples, 4, 3).unwrap();
        assert!(tv(&emp, &truth).unwrap() <= 0.02);
    }

    /// Maximizes `E_P[D] - E_Q[D]` over every vertex of the parameter box.
    fn brute_force_projection(p: &DiscreteJoint, q: &DiscreteJoint, f: &FeatureMap) -> f64 {
        let d = f.dim();
        let labels = p.labels();
        let n_params = labels * d + d;
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n_params) {
            let sign = |k: usize| if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
            let disc = |x: usize, y: usize| {
                let class: f64 = (0..d).map(|j| sign(y * d + j) * f.psi(x)[j]).sum();
                let marginal: f64 = (0..d).map(|j| sign(labels * d + j) * f.psi_prime(x)[j]).sum();
                class + marginal
            };
            let mut gap = 0.0;
            for x in 0..p.support() {
                for y in 0..labels {
                    gap += (p.get(x, y) - q.get(x, y)) * disc(x, y);
                }
            }
            best = best.max(gap);
        }
        best
    }

    #[test]
    fn projection_distance_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            use rand::Rng;
            let support = rng.random_range(1..=4);
            let labels = rng.random_range(1..=3);
            let d = rng.random_range(1..=2);
            let p = random_joint(&mut rng, support, labels, labels);
            let q = random_joint(&mut rng, support, labels, labels);
            let f = random_features(&mut rng, support, d);
            let exact = projection_nn_distance(&p, &q, &f).unwrap();
            assert!((exact - brute_force_projection(&p, &q, &f)).abs() <= 1e-10);
        }
    }

    fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).flat_map(|_| random_joint(rng, 1, n, n).probs().to_vec()).collect()
    }

    proptest! {
        #[test]
        fn push_preserves_mass_and_marginals(seed in any::<u64>()) {
            let inst = random_instance(seed);
            let pushed = push_through(&inst.p, &inst.channel).unwrap();
            prop_assert!((pushed.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in pushed.x_marginal().iter().zip(inst.p.x_marginal()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn tv_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, l) = (4, 3);
            let a = random_joint(&mut rng, s, l, l);
            let b = random_joint(&mut rng, s, l, l);
            let c = random_joint(&mut rng, s, l, l);
            prop_assert_eq!(tv(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(tv(&a, &b).unwrap(), tv(&b, &a).unwrap());
            prop_assert!(tv(&a, &b).unwrap() > 0.0);
            prop_assert!(tv(&a, &c).unwrap() <= tv(&a, &b).unwrap() + tv(&b, &c).unwrap() + 1e-15);
        }

        #[test]
        fn js_is_bounded_and_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_joint(&mut rng, 3, 3, 2);
            let b = random_joint(&mut rng, 3, 3, 2);
            let ab = js(&a, &b).unwrap();
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&ab));
            prop_assert!((ab - js(&b, &a).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn data_processing_under_any_stochastic_matrix(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let a = random_joint(&mut rng, 3, n, n);
            let b = random_joint(&mut rng, 3, n, n);
            let t = random_stochastic(&mut rng, n);
            let (pa, pb) = (push_through_matrix(&a, &t).unwrap(), push_through_matrix(&b, &t).unwrap());
            prop_assert!(tv(&pa, &pb).unwrap() <= tv(&a, &b).unwrap() + 1e-12);
            prop_assert!(js(&pa, &pb).unwrap() <= js(&a, &b).unwrap() + 1e-12);
        }
    }
}
