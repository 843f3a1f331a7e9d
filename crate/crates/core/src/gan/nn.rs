//! Fully connected networks with hand-written backpropagation.
//!
//! An [`Mlp`] only describes the layout; parameters live in a caller-owned
//! flat slice so that several networks can share one parameter vector.
//! Layer `l` stores its `out x in` weight matrix (row-major) followed by its
//! `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
    /// Slope 0.2 on the negative side.
    LeakyRelu,
}

impl Activation {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Identity => t,
            Activation::Tanh => t.tanh(),
            Activation::Softplus => softplus(t),
            Activation::LeakyRelu => {
                if t >= 0.0 {
                    t
                } else {
                    0.2 * t
                }
            }
        }
    }

    /// Derivative at pre-activation `t`, given `out = apply(t)`.
    pub fn derivative(self, t: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - out * out,
            Activation::Softplus => sigmoid(t),
            Activation::LeakyRelu => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
        }
    }
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    /// One activation per layer (`sizes.len() - 1` entries).
    pub activations: Vec<Activation>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// Hidden layers use `hidden`, the last layer uses `output`.
    pub fn new(sizes: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let layers = sizes.len() - 1;
        let activations = (0..layers).map(|l| if l + 1 == layers { output } else { hidden }).collect();
        Self { sizes, activations }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(offset, len)` of each layer's parameter block.
    pub fn layer_ranges(&self) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let len = w[0] * w[1] + w[1];
                let range = (offset, len);
                offset += len;
                range
            })
            .collect()
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.param_count());
        let mut current = input.to_vec();
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let act = self.activations[l];
            current = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    act.apply(biases[o] + dot(row, &current))
                })
                .collect();
            offset += n_in * n_out + n_out;
        }
        current
    }

    pub fn forward_trace(&self, params: &[f64], input: &[f64]) -> Trace {
        let mut values = Vec::with_capacity(self.sizes.len());
        let mut pre = Vec::with_capacity(self.layers());
        values.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = values.last().unwrap();
            let z: Vec<f64> = (0..n_out).map(|o| biases[o] + dot(&weights[o * n_in..(o + 1) * n_in], x)).collect();
            let act = self.activations[l];
            values.push(z.iter().map(|&t| act.apply(t)).collect());
            pre.push(z);
            offset += n_in * n_out + n_out;
        }
        Trace { values, pre }
    }

    /// Accumulates `d(out . grad_out)/d(params)` into `grad_params` (when
    /// given) and returns the gradient with respect to the input.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        grad_out: &[f64],
        mut grad_params: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let ranges = self.layer_ranges();
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (offset, _) = ranges[l];
            let act = self.activations[l];
            for o in 0..n_out {
                delta[o] *= act.derivative(trace.pre[l][o], trace.values[l + 1][o]);
            }
            let input = &trace.values[l];
            if let Some(grad) = grad_params.as_deref_mut() {
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[offset + o * n_in..offset + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    grad[offset + n_in * n_out + o] += d;
                }
            }
            let weights = &params[offset..offset + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (n, w) in next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *n += d * w;
                }
            }
            delta = next;
        }
        delta
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_counts() {
        let net = Mlp::new(vec![3, 5, 2], Activation::Tanh, Activation::Identity);
        assert_eq!(net.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(net.layer_ranges(), vec![(0, 20), (20, 12)]);
        let params = net.init(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(params.len(), net.param_count());
        assert_eq!(net.forward(&params, &[0.1, 0.2, 0.3]).len(), 2);
    }

    #[test]
    fn stable_scalar_functions() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in [Activation::Tanh, Activation::Softplus, Activation::LeakyRelu] {
            let net = Mlp::new(vec![3, 4, 4, 2], act, Activation::Tanh);
            let params = net.init(&mut rng);
            let input = [0.3, -0.7, 0.9];
            let upstream = [0.4, -1.3];
            let objective = |p: &[f64], x: &[f64]| dot(&net.forward(p, x), &upstream);
            let trace = net.forward_trace(&params, &input);
            assert_eq!(trace.output(), net.forward(&params, &input).as_slice());
            let mut grad = vec![0.0; params.len()];
            let grad_in = net.backward(&params, &trace, &upstream, Some(&mut grad));
            let eps = 1e-6;
            for k in 0..params.len() {
                let mut plus = params.clone();
                plus[k] += eps;
                let mut minus = params.clone();
                minus[k] -= eps;
                let fd = (objective(&plus, &input) - objective(&minus, &input)) / (2.0 * eps);
                assert!((fd - grad[k]).abs() < 1e-7, "{act:?} param {k}: {fd} vs {}", grad[k]);
            }
            for j in 0..3 {
                let mut plus = input;
                plus[j] += eps;
                let mut minus = input;
                minus[j] -= eps;
                let fd = (objective(&params, &plus) - objective(&params, &minus)) / (2.0 * eps);
                assert!((fd - grad_in[j]).abs() < 1e-7);
            }
        }
    }
}
