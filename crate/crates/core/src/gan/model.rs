//! Conditional generator and projection discriminator.

use super::nn::{dot, Activation, Mlp, Trace};
use super::GanError;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anything that maps a latent vector and a class label to a data point.
///
/// Evaluation code is written against this trait so that hand-built
/// reference generators can be scored the same way as trained networks.
pub trait ConditionalGenerator {
    fn latent_dim(&self) -> usize;
    fn class_count(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn generate(&self, z: &[f64], y: usize) -> Vec<f64>;
    /// Returns `G(z; y)` and the gradient of `grad_out . G(z; y)` with respect
    /// to `z`, where `grad_out` is computed from the output by `upstream`.
    fn generate_with_latent_grad(
        &self,
        z: &[f64],
        y: usize,
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> (Vec<f64>, Vec<f64>);
}

/// MLP generator on `concat(z, one_hot(y))`. The one-hot has a slot for every
/// label the discriminator knows, but only class slots are ever set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    latent_dim: usize,
    m: usize,
    label_count: usize,
    net: Mlp,
    params: Vec<f64>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        latent_dim: usize,
        m: usize,
        label_count: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![latent_dim + label_count];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let net = Mlp::new(sizes, activation, Activation::Identity);
        let params = net.init(rng);
        Self { latent_dim, m, label_count, net, params }
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len(), "generator parameter count");
        self.params.copy_from_slice(params);
    }

    fn input(&self, z: &[f64], y: usize) -> Vec<f64> {
        assert_eq!(z.len(), self.latent_dim, "latent dimension");
        assert!(y < self.m, "generator is conditioned on class labels only");
        let mut input = Vec::with_capacity(self.latent_dim + self.label_count);
        input.extend_from_slice(z);
        input.extend((0..self.label_count).map(|k| if k == y { 1.0 } else { 0.0 }));
        input
    }

    pub fn trace(&self, z: &[f64], y: usize) -> Trace {
        self.net.forward_trace(&self.params, &self.input(z, y))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `z`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad_params: Option<&mut [f64]>) -> Vec<f64> {
        let mut grad_in = self.net.backward(&self.params, trace, grad_out, grad_params);
        grad_in.truncate(self.latent_dim);
        grad_in
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

impl ConditionalGenerator for Generator {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn class_count(&self) -> usize {
        self.m
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn generate(&self, z: &[f64], y: usize) -> Vec<f64> {
        self.net.forward(&self.params, &self.input(z, y))
    }

    fn generate_with_latent_grad(
        &self,
        z: &[f64],
        y: usize,
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let trace = self.trace(z, y);
        let out = trace.output().to_vec();
        let grad_out = upstream(&out);
        let grad_z = self.backward(&trace, &grad_out, None);
        (out, grad_z)
    }
}

/// `D(x, y) = onehot(y)^T V psi(x) + v^T psi'(x)` with `|V_ij| <= clip`
/// enforced by clipping after every update.
///
/// Parameters are stored flat as `[psi | psi' | V (labels x d) | v (d)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiscriminator {
    label_count: usize,
    feature_dim: usize,
    psi: Mlp,
    psi_prime: Mlp,
    clip: f64,
    params: Vec<f64>,
}

/// Forward-pass state needed to backpropagate one discriminator score.
#[derive(Debug, Clone)]
pub struct DiscTrace {
    psi: Trace,
    psi_prime: Trace,
    label: usize,
    pub score: f64,
}

impl ProjectionDiscriminator {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        label_count: usize,
        hidden: &[usize],
        feature_dim: usize,
        activation: Activation,
        feature_activation: Activation,
        clip: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(feature_dim);
        let psi = Mlp::new(sizes.clone(), activation, feature_activation);
        let psi_prime = Mlp::new(sizes, activation, feature_activation);
        let mut params = psi.init(rng);
        params.extend(psi_prime.init(rng));
        let bound = 1.0 / (feature_dim as f64).sqrt();
        params.extend((0..(label_count + 1) * feature_dim).map(|_| rng.random_range(-bound..bound)));
        let mut d = Self { label_count, feature_dim, psi, psi_prime, clip, params };
        d.clip_projection();
        d
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input_dim(&self) -> usize {
        self.psi.input_dim()
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len(), "discriminator parameter count");
        self.params.copy_from_slice(params);
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn offsets(&self) -> [usize; 4] {
        let a = self.psi.param_count();
        let b = a + self.psi_prime.param_count();
        let c = b + self.label_count * self.feature_dim;
        [a, b, c, c + self.feature_dim]
    }

    /// Named `(offset, shape)` blocks of the flat parameter vector.
    pub fn blocks(&self) -> Vec<(String, usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, net, base) in [("psi", &self.psi, 0), ("psi_prime", &self.psi_prime, self.offsets()[0])] {
            for (l, (offset, _)) in net.layer_ranges().into_iter().enumerate() {
                let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
                out.push((format!("{name}.{l}.weight"), base + offset, vec![n_out, n_in]));
                out.push((format!("{name}.{l}.bias"), base + offset + n_in * n_out, vec![n_out]));
            }
        }
        let [_, b, c, _] = self.offsets();
        out.push(("V".into(), b, vec![self.label_count, self.feature_dim]));
        out.push(("v".into(), c, vec![self.feature_dim]));
        out
    }

    /// The projection matrix `V`, row-major `labels x d`.
    pub fn projection(&self) -> &[f64] {
        let [_, b, c, _] = self.offsets();
        &self.params[b..c]
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        let [_, b, c, _] = self.offsets();
        &mut self.params[b..c]
    }

    /// The marginal weights `v`.
    pub fn marginal_weights(&self) -> &[f64] {
        let [_, _, c, e] = self.offsets();
        &self.params[c..e]
    }

    pub fn marginal_weights_mut(&mut self) -> &mut [f64] {
        let [_, _, c, e] = self.offsets();
        &mut self.params[c..e]
    }

    /// Clamps every entry of `V` into `[-clip, clip]`.
    pub fn clip_projection(&mut self) {
        let clip = self.clip;
        for w in self.projection_mut() {
            *w = w.clamp(-clip, clip);
        }
    }

    pub fn features(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let [a, b, _, _] = self.offsets();
        (self.psi.forward(&self.params[..a], x), self.psi_prime.forward(&self.params[a..b], x))
    }

    /// Raw score for a hard label.
    pub fn score(&self, x: &[f64], label: usize) -> f64 {
        let (psi, psi_prime) = self.features(x);
        let d = self.feature_dim;
        dot(&self.projection()[label * d..(label + 1) * d], &psi) + dot(self.marginal_weights(), &psi_prime)
    }

    pub fn trace(&self, x: &[f64], label: usize) -> DiscTrace {
        let [a, b, _, _] = self.offsets();
        let psi = self.psi.forward_trace(&self.params[..a], x);
        let psi_prime = self.psi_prime.forward_trace(&self.params[a..b], x);
        let d = self.feature_dim;
        let score = dot(&self.projection()[label * d..(label + 1) * d], psi.output())
            + dot(self.marginal_weights(), psi_prime.output());
        DiscTrace { psi, psi_prime, label, score }
    }

    /// Backpropagates `grad_score` (dL/dD). Accumulates parameter gradients
    /// when `grad_params` is given; returns dL/dx.
    pub fn backward(&self, trace: &DiscTrace, grad_score: f64, mut grad_params: Option<&mut [f64]>) -> Vec<f64> {
        let [a, b, c, e] = self.offsets();
        let d = self.feature_dim;
        let row = trace.label * d;
        let v_row = &self.projection()[row..row + d];
        let grad_psi: Vec<f64> = v_row.iter().map(|w| w * grad_score).collect();
        let grad_psi_prime: Vec<f64> = self.marginal_weights().iter().map(|w| w * grad_score).collect();
        if let Some(grad) = grad_params.as_deref_mut() {
            for (g, f) in grad[b + row..b + row + d].iter_mut().zip(trace.psi.output()) {
                *g += grad_score * f;
            }
            for (g, f) in grad[c..e].iter_mut().zip(trace.psi_prime.output()) {
                *g += grad_score * f;
            }
        }
        let (grad_a, grad_b) = match grad_params {
            Some(grad) => {
                let (head, tail) = grad.split_at_mut(a);
                (Some(head), Some(&mut tail[..b - a]))
            }
            None => (None, None),
        };
        let gx1 = self.psi.backward(&self.params[..a], &trace.psi, &grad_psi, grad_a);
        let gx2 = self.psi_prime.backward(&self.params[a..b], &trace.psi_prime, &grad_psi_prime, grad_b);
        gx1.iter().zip(&gx2).map(|(p, q)| p + q).collect()
    }
}

/// Evaluates `D` on a label given as a vector over all labels (usually one-hot).
pub fn disc_forward(d: &ProjectionDiscriminator, x: &[f64], label: &[f64]) -> Result<f64, GanError> {
    if x.len() != d.input_dim() {
        return Err(GanError::Shape(format!("x has dimension {}, expected {}", x.len(), d.input_dim())));
    }
    if label.len() != d.label_count() {
        return Err(GanError::Shape(format!("label vector has length {}, expected {}", label.len(), d.label_count())));
    }
    let (psi, psi_prime) = d.features(x);
    let k = d.feature_dim();
    let v = d.projection();
    let class_part: f64 =
        label.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(u, w)| w * dot(&v[u * k..(u + 1) * k], &psi)).sum();
    Ok(class_part + dot(d.marginal_weights(), &psi_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc(rng: &mut ChaCha8Rng) -> ProjectionDiscriminator {
        ProjectionDiscriminator::new(2, 3, &[5], 4, Activation::Tanh, Activation::Tanh, 1.0, rng)
    }

    fn onehot(k: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_heads_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = disc(&mut rng);
        d.projection_mut().fill(0.0);
        d.marginal_weights_mut().fill(0.0);
        for label in 0..3 {
            assert_eq!(disc_forward(&d, &[0.3, -2.0], &onehot(label, 3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn identity_features_sum_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // no hidden layer, identity features: psi(x) = W x + b
        let mut d = ProjectionDiscriminator::new(2, 3, &[], 2, Activation::Tanh, Activation::Identity, 1.0, &mut rng);
        let params = d.params_mut();
        params[..6].copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        params[6..12].fill(0.0);
        d.projection_mut().fill(0.0);
        d.projection_mut()[2..4].fill(1.0);
        d.marginal_weights_mut().fill(0.0);
        let x = [0.7, -1.9];
        assert!((disc_forward(&d, &x, &onehot(1, 3)).unwrap() - (0.7 - 1.9)).abs() < 1e-15);
        assert_eq!(disc_forward(&d, &x, &onehot(0, 3)).unwrap(), 0.0);
        assert!(disc_forward(&d, &x, &onehot(0, 2)).is_err());
        assert!(disc_forward(&d, &[1.0], &onehot(0, 3)).is_err());
    }

    #[test]
    fn clipping_bounds_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = disc(&mut rng);
        d.projection_mut()[0] = 1.7;
        d.projection_mut()[1] = -3.0;
        d.clip_projection();
        assert_eq!(d.projection()[0], 1.0);
        assert_eq!(d.projection()[1], -1.0);
        let x = [0.1, 0.2];
        let (psi, psi_prime) = d.features(&x);
        let expected = dot(&d.projection()[..4], &psi) + dot(d.marginal_weights(), &psi_prime);
        assert_eq!(d.score(&x, 0), expected);
    }

    #[test]
    fn block_layout_covers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = disc(&mut rng);
        let blocks = d.blocks();
        let covered: usize = blocks.iter().map(|(_, _, shape)| shape.iter().product::<usize>()).sum();
        assert_eq!(covered, d.params().len());
        assert_eq!(blocks.last().unwrap().0, "v");
    }

    #[test]
    fn generator_ignores_uncertain_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Generator::new(3, 2, 3, &[8], 2, Activation::Tanh, &mut rng);
        assert_eq!(g.net().input_dim(), 6);
        let x = g.generate(&[0.1, 0.2, 0.3], 1);
        assert_eq!(x.len(), 2);
        let (out, grad) = g.generate_with_latent_grad(&[0.1, 0.2, 0.3], 1, &mut |o| o.to_vec());
        assert_eq!(out, x);
        assert_eq!(grad.len(), 3);
    }

    #[test]
    #[should_panic(expected = "class labels only")]
    fn generator_rejects_uncertain_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Generator::new(3, 2, 3, &[8], 2, Activation::Tanh, &mut rng);
        g.generate(&[0.0; 3], 2);
    }
}
