//! Adversarial losses as weighted sums of per-sample terms.
//!
//! Both objectives reduce to
//! `L = sum_real w * phi(D(x, l)) + sum_fake w * phi(1 - D(G(z; y), l))`,
//! so a minibatch estimate and an exact expectation over an enumerable
//! instance share one evaluator and differ only in how terms are built.

use super::model::{Generator, ProjectionDiscriminator};
use super::nn::{sigmoid, softplus};
use super::GanError;
use crate::channel::ConfusionMatrix;
use crate::data::sample_class;
use crate::divergence::DiscreteJoint;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Outer loss function applied to discriminator outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    /// Raw scores: real term `s`, fake term `1 - s`.
    Linear,
    /// Sigmoid-squashed scores: real term `log sigmoid(s)`, fake term
    /// `log(1 - sigmoid(s))`.
    Log,
}

impl Phi {
    /// Real-data term and its derivative in the raw score.
    pub fn real(self, s: f64) -> (f64, f64) {
        match self {
            Phi::Linear => (s, 1.0),
            Phi::Log => (-softplus(-s), sigmoid(-s)),
        }
    }

    /// Generated-data term and its derivative in the raw score.
    pub fn fake(self, s: f64) -> (f64, f64) {
        match self {
            Phi::Linear => (1.0 - s, -1.0),
            Phi::Log => (-softplus(s), -sigmoid(s)),
        }
    }
}

/// What the generator minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenObjective {
    /// The fake part of `L` itself.
    Minimax,
    /// `-phi(D(G(z), l))`, same fixed points with stronger early gradients.
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTerm {
    pub x: Vec<f64>,
    pub label: usize,
    pub weight: f64,
}

/// A generated sample `G(z; y)` scored by the discriminator under `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeTerm {
    pub z: Vec<f64>,
    pub y: usize,
    pub label: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub real: Vec<RealTerm>,
    pub fake: Vec<FakeTerm>,
}

impl LossTerms {
    pub fn len(&self) -> usize {
        self.real.len() + self.fake.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_d: Option<Vec<f64>>,
    pub grad_g: Option<Vec<f64>>,
}

/// Evaluates `L` and optionally its gradients with respect to the
/// discriminator and generator parameters. Terms are accumulated in order.
pub fn evaluate(
    terms: &LossTerms,
    g: &Generator,
    d: &ProjectionDiscriminator,
    phi: Phi,
    want_d: bool,
    want_g: bool,
) -> LossEval {
    let mut grad_d = want_d.then(|| vec![0.0; d.params().len()]);
    let mut grad_g = want_g.then(|| vec![0.0; g.params().len()]);
    let mut value = 0.0;
    for t in &terms.real {
        let trace = d.trace(&t.x, t.label);
        let (v, dv) = phi.real(trace.score);
        value += t.weight * v;
        if let Some(grad) = grad_d.as_deref_mut() {
            d.backward(&trace, t.weight * dv, Some(grad));
        }
    }
    for t in &terms.fake {
        let g_trace = g.trace(&t.z, t.y);
        let trace = d.trace(g_trace.output(), t.label);
        let (v, dv) = phi.fake(trace.score);
        value += t.weight * v;
        if want_d || want_g {
            let grad_x = d.backward(&trace, t.weight * dv, grad_d.as_deref_mut());
            if let Some(grad) = grad_g.as_deref_mut() {
                g.backward(&g_trace, &grad_x, Some(grad));
            }
        }
    }
    LossEval { value, grad_d, grad_g }
}

/// Generator objective over the fake terms, with its parameter gradient.
pub fn evaluate_generator(
    fake: &[FakeTerm],
    g: &Generator,
    d: &ProjectionDiscriminator,
    phi: Phi,
    objective: GenObjective,
) -> LossEval {
    let mut grad = vec![0.0; g.params().len()];
    let mut value = 0.0;
    for t in fake {
        let g_trace = g.trace(&t.z, t.y);
        let trace = d.trace(g_trace.output(), t.label);
        let (v, dv) = match objective {
            GenObjective::Minimax => phi.fake(trace.score),
            GenObjective::NonSaturating => {
                let (v, dv) = phi.real(trace.score);
                (-v, -dv)
            }
        };
        value += t.weight * v;
        let grad_x = d.backward(&trace, t.weight * dv, None);
        g.backward(&g_trace, &grad_x, Some(&mut grad));
    }
    LossEval { value, grad_d: None, grad_g: Some(grad) }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `n` fake terms with `y ~ priors`, `z ~ N(0, I)` and discriminator label
/// `label_of(y, rng)`.
pub(crate) fn sample_fakes<R: Rng + ?Sized>(
    n: usize,
    latent_dim: usize,
    priors: &[f64],
    weight: f64,
    rng: &mut R,
    mut label_of: impl FnMut(usize, &mut R) -> Result<usize, GanError>,
) -> Result<Vec<FakeTerm>, GanError> {
    (0..n)
        .map(|_| {
            let y = sample_class(priors, rng);
            let z = standard_normal(latent_dim, rng);
            let label = label_of(y, rng)?;
            Ok(FakeTerm { z, y, label, weight })
        })
        .collect()
}

/// Minibatch terms for the corrupted-label loss. Each generated sample gets a
/// fresh `y ~ priors` and a fresh observed label drawn from row `y` of the
/// same `channel` that corrupted the real data.
pub fn rcgan_terms<R: Rng + ?Sized>(
    real: &[(&[f64], usize)],
    channel: &ConfusionMatrix,
    priors: &[f64],
    latent_dim: usize,
    n_fake: usize,
    rng: &mut R,
) -> Result<LossTerms, GanError> {
    if !channel.is_full_rank() {
        let mass = channel.erasure_mass();
        let class = mass.iter().position(|&s| s > 1.0 - crate::channel::SINGULAR_TOL).unwrap_or(0);
        return Err(crate::channel::ChannelError::SingularChannel { class, mass: mass[class] }.into());
    }
    if priors.len() != channel.m() {
        return Err(GanError::Shape(format!("{} priors for {} classes", priors.len(), channel.m())));
    }
    let labels = channel.dim();
    let w = 1.0 / real.len().max(1) as f64;
    let real = real
        .iter()
        .map(|&(x, label)| {
            if label >= labels {
                return Err(GanError::Shape(format!("observed label {label} outside 0..{labels}")));
            }
            Ok(RealTerm { x: x.to_vec(), label, weight: w })
        })
        .collect::<Result<_, _>>()?;
    let fake = sample_fakes(n_fake, latent_dim, priors, 1.0 / n_fake.max(1) as f64, rng, |y, rng| {
        Ok(channel.corrupt(y, rng)?)
    })?;
    Ok(LossTerms { real, fake })
}

/// Minibatch terms for the few-label loss. Unconditional terms use the
/// missing-label slot `m` on all real points and on `n_fake` generated points;
/// conditional terms carry weight `lambda` and use the labeled points and
/// `n_fake_labeled` generated points. With `lambda = 0` the labeled inputs are
/// ignored.
#[allow(clippy::too_many_arguments)]
pub fn lambda_terms<R: Rng + ?Sized>(
    all_x: &[&[f64]],
    labeled: &[(&[f64], usize)],
    lambda: f64,
    m: usize,
    priors: &[f64],
    latent_dim: usize,
    n_fake: usize,
    n_fake_labeled: usize,
    rng: &mut R,
) -> Result<LossTerms, GanError> {
    if all_x.is_empty() {
        return Err(GanError::EmptyUnlabeled);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(GanError::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if priors.len() != m {
        return Err(GanError::Shape(format!("{} priors for {m} classes", priors.len())));
    }
    let w = 1.0 / all_x.len() as f64;
    let mut real: Vec<RealTerm> = all_x.iter().map(|x| RealTerm { x: x.to_vec(), label: m, weight: w }).collect();
    let mut fake = sample_fakes(n_fake, latent_dim, priors, 1.0 / n_fake.max(1) as f64, rng, |_, _| Ok(m))?;
    if lambda > 0.0 {
        if labeled.is_empty() {
            return Err(GanError::Dataset("lambda > 0 needs at least one labeled record".into()));
        }
        let w = lambda / labeled.len() as f64;
        for &(x, y) in labeled {
            if y >= m {
                return Err(GanError::Shape(format!("labeled record has label {y}, expected < {m}")));
            }
            real.push(RealTerm { x: x.to_vec(), label: y, weight: w });
        }
        let w = lambda / n_fake_labeled.max(1) as f64;
        fake.extend(sample_fakes(n_fake_labeled, latent_dim, priors, w, rng, |y, _| Ok(y))?);
    }
    Ok(LossTerms { real, fake })
}

/// Minibatch few-label loss with gradients for both networks.
#[allow(clippy::too_many_arguments)]
pub fn rcgan_lambda_loss<R: Rng + ?Sized>(
    all_x: &[&[f64]],
    labeled: &[(&[f64], usize)],
    g: &Generator,
    d: &ProjectionDiscriminator,
    cfg: &super::TrainConfig,
    m: usize,
    priors: &[f64],
    rng: &mut R,
) -> Result<LossEval, GanError> {
    let latent = cfg.latent_dim;
    let terms = lambda_terms(all_x, labeled, cfg.lambda, m, priors, latent, all_x.len(), labeled.len(), rng)?;
    Ok(evaluate(&terms, g, d, cfg.phi, true, true))
}

fn check_exact_inputs(
    points: &[Vec<f64>],
    joint: &DiscreteJoint,
    latents: &[(Vec<f64>, f64)],
    priors: &[f64],
    m: usize,
) -> Result<(), GanError> {
    if points.len() != joint.support() {
        return Err(GanError::Shape(format!("{} points for support {}", points.len(), joint.support())));
    }
    if priors.len() != m {
        return Err(GanError::Shape(format!("{} priors for {m} classes", priors.len())));
    }
    if !joint.is_uncorrupted(m) {
        return Err(GanError::Shape("real joint must put mass on class labels only".into()));
    }
    if latents.is_empty() {
        return Err(GanError::Shape("no latent points".into()));
    }
    Ok(())
}

/// Exact-expectation terms of the corrupted-label loss on an enumerable
/// instance: real `(x, y)` from `joint` pushed through `channel`, generator
/// latents `z_k` with probabilities `pi_k`, and class prior `priors`.
pub fn exact_rcgan_terms(
    points: &[Vec<f64>],
    joint: &DiscreteJoint,
    latents: &[(Vec<f64>, f64)],
    priors: &[f64],
    channel: &ConfusionMatrix,
) -> Result<LossTerms, GanError> {
    let m = channel.m();
    check_exact_inputs(points, joint, latents, priors, m)?;
    if joint.labels() != channel.dim() {
        return Err(GanError::Shape(format!("joint has {} labels, channel {}", joint.labels(), channel.dim())));
    }
    let mut terms = LossTerms::default();
    for (i, x) in points.iter().enumerate() {
        for y in 0..m {
            let p = joint.get(i, y);
            for (u, &c) in channel.row(y).iter().enumerate() {
                if p * c > 0.0 {
                    terms.real.push(RealTerm { x: x.clone(), label: u, weight: p * c });
                }
            }
        }
    }
    for (z, pi) in latents {
        for (y, &py) in priors.iter().enumerate() {
            for (u, &c) in channel.row(y).iter().enumerate() {
                if pi * py * c > 0.0 {
                    terms.fake.push(FakeTerm { z: z.clone(), y, label: u, weight: pi * py * c });
                }
            }
        }
    }
    Ok(terms)
}

/// Exact-expectation terms of the few-label loss on an enumerable instance,
/// where every real point counts toward the unconditional terms and the
/// labeled distribution is `joint` itself.
pub fn exact_lambda_terms(
    points: &[Vec<f64>],
    joint: &DiscreteJoint,
    latents: &[(Vec<f64>, f64)],
    priors: &[f64],
    lambda: f64,
    m: usize,
) -> Result<LossTerms, GanError> {
    check_exact_inputs(points, joint, latents, priors, m)?;
    let mut terms = LossTerms::default();
    for (i, (x, px)) in points.iter().zip(joint.x_marginal()).enumerate() {
        if px > 0.0 {
            terms.real.push(RealTerm { x: x.clone(), label: m, weight: px });
        }
        for y in 0..m {
            let p = joint.get(i, y);
            if lambda * p > 0.0 {
                terms.real.push(RealTerm { x: x.clone(), label: y, weight: lambda * p });
            }
        }
    }
    for (z, pi) in latents {
        for (y, &py) in priors.iter().enumerate() {
            if pi * py > 0.0 {
                terms.fake.push(FakeTerm { z: z.clone(), y, label: m, weight: pi * py });
            }
            if lambda * pi * py > 0.0 {
                terms.fake.push(FakeTerm { z: z.clone(), y, label: y, weight: lambda * pi * py });
            }
        }
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;
    use crate::gan::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nets(rng: &mut ChaCha8Rng, m: usize, labels: usize) -> (Generator, ProjectionDiscriminator) {
        let g = Generator::new(2, m, labels, &[6], 2, Activation::Tanh, rng);
        let d = ProjectionDiscriminator::new(2, labels, &[6], 3, Activation::Tanh, Activation::Tanh, 1.0, rng);
        (g, d)
    }

    #[test]
    fn phi_derivatives_match_differences() {
        for phi in [Phi::Linear, Phi::Log] {
            for s in [-30.0, -2.0, -0.1, 0.0, 0.7, 4.0, 30.0] {
                let h = 1e-6;
                let fd_r = (phi.real(s + h).0 - phi.real(s - h).0) / (2.0 * h);
                let fd_f = (phi.fake(s + h).0 - phi.fake(s - h).0) / (2.0 * h);
                assert!((fd_r - phi.real(s).1).abs() < 1e-8);
                assert!((fd_f - phi.fake(s).1).abs() < 1e-8);
            }
        }
        // log sigmoid(0) = log 1/2
        assert!((Phi::Log.real(0.0).0 + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(Phi::Log.fake(800.0).0.is_finite());
    }

    #[test]
    fn identity_channel_keeps_generated_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ConfusionMatrix::identity(3, 1);
        let x = [0.0, 1.0];
        let terms = rcgan_terms(&[(&x, 2)], &c, &[0.2, 0.3, 0.5], 2, 500, &mut rng).unwrap();
        assert!(terms.fake.iter().all(|t| t.label == t.y));
        assert_eq!(terms.real[0].label, 2);
    }

    #[test]
    fn generated_labels_follow_channel_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = ChannelSpec::missing_uniform(2, 0.5).unwrap().build().unwrap();
        let x = [0.0, 0.0];
        let terms = rcgan_terms(&[(&x, 0)], &c, &[0.5, 0.5], 2, 20_000, &mut rng).unwrap();
        let missing = terms.fake.iter().filter(|t| t.label == 2).count() as f64 / 20_000.0;
        assert!((missing - 0.5).abs() < 0.02, "{missing}");
        assert!(terms.fake.iter().all(|t| t.label == t.y || t.label == 2));
    }

    #[test]
    fn singular_channel_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = ChannelSpec::missing(&[1.0, 0.2]).unwrap().build().unwrap();
        let x = [0.0, 0.0];
        assert!(matches!(
            rcgan_terms(&[(&x, 0)], &c, &[0.5, 0.5], 2, 4, &mut rng),
            Err(GanError::Channel(crate::channel::ChannelError::SingularChannel { class: 0, .. }))
        ));
    }

    #[test]
    fn zero_lambda_ignores_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g, d) = nets(&mut rng, 2, 3);
        let xs = [[0.1, 0.2], [1.0, -1.0]];
        let all: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let labeled_a: Vec<(&[f64], usize)> = vec![(&xs[0], 0)];
        let labeled_b: Vec<(&[f64], usize)> = vec![(&xs[1], 1), (&xs[0], 1)];
        let priors = [0.5, 0.5];
        let ta = lambda_terms(&all, &labeled_a, 0.0, 2, &priors, 2, 3, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let tb = lambda_terms(&all, &labeled_b, 0.0, 2, &priors, 2, 3, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(ta, tb);
        assert!(ta.real.iter().map(|t| t.label).chain(ta.fake.iter().map(|t| t.label)).all(|l| l == 2));
        assert_eq!(evaluate(&ta, &g, &d, Phi::Log, false, false).value, evaluate(&tb, &g, &d, Phi::Log, false, false).value);
        assert!(matches!(lambda_terms(&[], &labeled_a, 0.1, 2, &priors, 2, 3, 3, &mut rng), Err(GanError::EmptyUnlabeled)));
    }

    #[test]
    fn lambda_equivalence_on_small_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 2;
        let (g, d) = nets(&mut rng, m, m + 1);
        let points = vec![vec![0.3, -0.2], vec![-1.0, 0.5], vec![2.0, 2.0]];
        let joint = DiscreteJoint::new(3, 3, vec![0.2, 0.1, 0.0, 0.0, 0.3, 0.0, 0.25, 0.15, 0.0]).unwrap();
        let latents = vec![(vec![0.1, -0.4], 0.6), (vec![1.2, 0.3], 0.4)];
        let priors = [0.45, 0.55];
        let lambda = 0.1;
        let c = ChannelSpec::missing_uniform(m, 1.0 / (1.0 + lambda)).unwrap().build().unwrap();
        for phi in [Phi::Linear, Phi::Log] {
            let a = evaluate(&exact_rcgan_terms(&points, &joint, &latents, &priors, &c).unwrap(), &g, &d, phi, false, false);
            let b = evaluate(
                &exact_lambda_terms(&points, &joint, &latents, &priors, lambda, m).unwrap(),
                &g,
                &d,
                phi,
                false,
                false,
            );
            assert!((a.value - b.value / (1.0 + lambda)).abs() < 1e-12, "{phi:?}: {} vs {}", a.value, b.value);
        }
    }

    #[test]
    fn nonsaturating_linear_matches_minimax_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, d) = nets(&mut rng, 2, 3);
        let c = ConfusionMatrix::identity(2, 1);
        let terms = rcgan_terms(&[], &c, &[0.5, 0.5], 2, 4, &mut rng).unwrap();
        let a = evaluate_generator(&terms.fake, &g, &d, Phi::Linear, GenObjective::Minimax);
        let b = evaluate_generator(&terms.fake, &g, &d, Phi::Linear, GenObjective::NonSaturating);
        assert_eq!(a.grad_g, b.grad_g);
        let full = evaluate(&terms, &g, &d, Phi::Linear, false, true);
        for (x, y) in full.grad_g.unwrap().iter().zip(a.grad_g.unwrap()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
