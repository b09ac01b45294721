use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::params::{join, Parameters};
use crate::{check_len, Result};

/// Nonlinearity applied after every hidden layer. The output layer is
/// always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Silu => x * sigmoid(x),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.b);
        for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.n_in)) {
            *o += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Fixed-architecture multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub sizes: Vec<usize>,
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Per-call intermediate values needed by [`DenseNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct DenseCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl DenseNet {
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "a net needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers = sizes
            .windows(2)
            .map(|w| Linear {
                n_in: w[0],
                n_out: w[1],
                w: vec![0.0; w[0] * w[1]],
                b: vec![0.0; w[1]],
            })
            .collect();
        Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
        }
    }

    /// Uniform Glorot initialisation with zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, activation);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            layer.w.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        net
    }

    /// Multiply the final layer's weights by `scale`; small output layers make
    /// residual heads start close to the identity.
    pub fn scale_output(&mut self, scale: f64) {
        if let Some(last) = self.layers.last_mut() {
            last.w.iter_mut().for_each(|w| *w *= scale);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn try_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", self.input_dim(), x.len())?;
        Ok(self.forward(x))
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, DenseCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cache = DenseCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&cur, &mut z);
            cache.inputs.push(cur);
            if k < last {
                let a = z.iter().map(|&v| self.activation.apply(v)).collect();
                cache.pre.push(z);
                cur = a;
            } else {
                cur = z;
            }
        }
        (cur, cache)
    }

    /// Backpropagate `dout` through the cached call. Parameter gradients are
    /// accumulated into `grads` (a net of identical shape); the gradient with
    /// respect to the input is returned.
    pub fn backward(&self, cache: &DenseCache, dout: &[f64], grads: &mut DenseNet) -> Vec<f64> {
        debug_assert_eq!(dout.len(), self.output_dim());
        let mut delta = dout.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            let input = &cache.inputs[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            let mut dx = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (dxi, &w) in dx.iter_mut().zip(row) {
                    *dxi += d * w;
                }
            }
            if k > 0 {
                let pre = &cache.pre[k - 1];
                for (dxi, &z) in dx.iter_mut().zip(pre) {
                    *dxi *= self.activation.derivative(z);
                }
            }
            delta = dx;
        }
        delta
    }

    /// One forward pass followed by a backward pass of `output_grad`.
    /// Returns `(output, input_grad, param_grads)`.
    pub fn forward_backward(
        &self,
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, DenseNet)> {
        check_len("dense input", self.input_dim(), input.len())?;
        check_len("dense output grad", self.output_dim(), output_grad.len())?;
        let (out, cache) = self.forward_cached(input);
        let mut grads = DenseNet::zeros(&self.sizes, self.activation);
        let din = self.backward(&cache, output_grad, &mut grads);
        Ok((out, din, grads))
    }
}

impl Parameters for DenseNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (k, l) in self.layers.iter().enumerate() {
            f(&join(prefix, &format!("l{k}.w")), &[l.n_out, l.n_in], &l.w);
            f(&join(prefix, &format!("l{k}.b")), &[l.n_out], &l.b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            f(&join(prefix, &format!("l{k}.w")), &[l.n_out, l.n_in], &mut l.w);
            f(&join(prefix, &format!("l{k}.b")), &[l.n_out], &mut l.b);
        }
    }
}
