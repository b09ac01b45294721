use fioc_numkit::prob::{
    bernoulli_kl, bernoulli_kl_grad, gumbel_noise, gumbel_softmax, gumbel_softmax_backward, softmax, softmax_backward,
};
use fioc_numkit::{join, Activation, DenseCache, DenseNet, Parameters};
use rand::Rng;

use super::{GraphEstimate, SoftGraph};
use crate::transition::add;
use crate::{ModelError, Result};

/// Shared encoder of ordered object pairs, `u_ij = f(s_i, s_j, s_i - s_j)`, plus a
/// linear two-logit edge head. Index 1 of the logits is the "edge" class.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoder {
    pub state_dim: usize,
    pub net: DenseNet,
    pub head: DenseNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEmbedding {
    pub n: usize,
    /// `u` for ordered pair `(i, j)` at `i * n + j`; empty on the diagonal.
    pub u: Vec<Vec<f64>>,
}

impl PairwiseEmbedding {
    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        (i != j).then(|| self.u[i * self.n + j].as_slice())
    }

    pub fn pairs(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn mean(&self) -> Vec<f64> {
        let dim = self.u.iter().map(Vec::len).max().unwrap_or(0);
        let mut m = vec![0.0; dim];
        for u in self.u.iter().filter(|u| !u.is_empty()) {
            add(&mut m, u);
        }
        let p = self.pairs() as f64;
        m.iter_mut().for_each(|v| *v /= p);
        m
    }
}

#[derive(Debug, Clone)]
struct PairCache {
    net: DenseCache,
    head: Option<DenseCache>,
    logits: Vec<f64>,
    /// Gumbel-softmax sample.
    y: Vec<f64>,
    /// Noise-free class probabilities.
    q: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PairCaches {
    n: usize,
    pairs: Vec<Option<PairCache>>,
    pub embedding: PairwiseEmbedding,
}

/// Output of a differentiable edge sampling pass.
#[derive(Debug, Clone)]
pub struct EdgeSample {
    /// Sampled soft weights used to gate messages.
    pub weights: SoftGraph,
    /// Noise-free edge probabilities.
    pub probs: SoftGraph,
    pub cache: PairCaches,
}

impl PairEncoder {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: usize, u_dim: usize, rng: &mut R) -> Self {
        Self {
            state_dim,
            net: DenseNet::new(&[3 * state_dim, hidden, u_dim], Activation::Silu, rng),
            head: DenseNet::new(&[u_dim, 2], Activation::Identity, rng),
        }
    }

    pub fn zeros(state_dim: usize, hidden: usize, u_dim: usize) -> Self {
        Self {
            state_dim,
            net: DenseNet::zeros(&[3 * state_dim, hidden, u_dim], Activation::Silu),
            head: DenseNet::zeros(&[u_dim, 2], Activation::Identity),
        }
    }

    pub fn u_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn pair_input(states: &[Vec<f64>], i: usize, j: usize) -> Vec<f64> {
        let mut x = states[i].clone();
        x.extend_from_slice(&states[j]);
        x.extend(states[i].iter().zip(&states[j]).map(|(a, b)| a - b));
        x
    }

    fn embed_cached(&self, states: &[Vec<f64>], with_head: bool) -> PairCaches {
        let n = states.len();
        let mut pairs = vec![None; n * n];
        let mut u = vec![Vec::new(); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (e, net) = self.net.forward_cached(&Self::pair_input(states, i, j));
                let (head, logits, q) = if with_head {
                    let (logits, hc) = self.head.forward_cached(&e);
                    let q = softmax(&logits);
                    (Some(hc), logits, q)
                } else {
                    (None, Vec::new(), Vec::new())
                };
                u[i * n + j] = e;
                pairs[i * n + j] = Some(PairCache { net, head, logits, y: Vec::new(), q });
            }
        }
        PairCaches {
            n,
            pairs,
            embedding: PairwiseEmbedding { n, u },
        }
    }

    /// Logits for every ordered pair, `i * n + j`; `[0, 0]` on the diagonal.
    pub fn logits(&self, states: &[Vec<f64>]) -> Vec<[f64; 2]> {
        let n = states.len();
        let mut out = vec![[0.0; 2]; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let l = self.head.forward(&self.net.forward(&Self::pair_input(states, i, j)));
                    out[i * n + j] = [l[0], l[1]];
                }
            }
        }
        out
    }

    /// Noise-free edge probabilities.
    pub fn edge_probs(&self, states: &[Vec<f64>]) -> SoftGraph {
        let n = states.len();
        let w = self.logits(states).iter().map(|l| softmax(l)[1]).collect();
        SoftGraph::from_weights(n, w)
    }

    /// Gumbel-softmax edge weights with explicit noise (`noise[i * n + j]`).
    pub fn sample_edges(&self, states: &[Vec<f64>], temperature: f64, noise: &[[f64; 2]]) -> Result<EdgeSample> {
        let n = states.len();
        if noise.len() != n * n {
            return Err(ModelError::InvalidArgument(format!("edge noise has {} entries, expected {}", noise.len(), n * n)));
        }
        let mut cache = self.embed_cached(states, true);
        let mut w = vec![0.0; n * n];
        let mut p = vec![0.0; n * n];
        for k in 0..n * n {
            if let Some(pc) = cache.pairs[k].as_mut() {
                pc.y = gumbel_softmax(&pc.logits, temperature, &noise[k])?;
                w[k] = pc.y[1];
                p[k] = pc.q[1];
            }
        }
        Ok(EdgeSample {
            weights: SoftGraph::from_weights(n, w),
            probs: SoftGraph::from_weights(n, p),
            cache,
        })
    }

    /// Embeddings without the edge head, for pooling.
    pub fn embed_for_pooling(&self, states: &[Vec<f64>]) -> PairCaches {
        self.embed_cached(states, false)
    }

    /// Backward of [`sample_edges`]: gradients on sampled weights and on
    /// noise-free probabilities. Returns per-object state gradients.
    pub fn backward_edges(
        &self,
        cache: &PairCaches,
        temperature: f64,
        d_weights: &[f64],
        d_probs: &[f64],
        grads: &mut PairEncoder,
    ) -> Vec<Vec<f64>> {
        let n = cache.n;
        let mut ds = vec![vec![0.0; self.state_dim]; n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let Some(pc) = &cache.pairs[k] else { continue };
                let (dw, dp) = (d_weights[k], d_probs[k]);
                if dw == 0.0 && dp == 0.0 {
                    continue;
                }
                let mut dl = gumbel_softmax_backward(&pc.y, temperature, &[0.0, dw]);
                add(&mut dl, &softmax_backward(&pc.q, &[0.0, dp]));
                let du = self.head.backward(pc.head.as_ref().expect("head cache"), &dl, &mut grads.head);
                self.backward_pair(cache, i, j, &du, grads, &mut ds);
            }
        }
        ds
    }

    /// Backward of one pair embedding given `d u_ij`.
    pub fn backward_pair(
        &self,
        cache: &PairCaches,
        i: usize,
        j: usize,
        du: &[f64],
        grads: &mut PairEncoder,
        ds: &mut [Vec<f64>],
    ) {
        let pc = cache.pairs[i * cache.n + j].as_ref().expect("pair cache");
        let dx = self.net.backward(&pc.net, du, &mut grads.net);
        let k = self.state_dim;
        add(&mut ds[i], &dx[..k]);
        add(&mut ds[j], &dx[k..2 * k]);
        add(&mut ds[i], &dx[2 * k..]);
        ds[j].iter_mut().zip(&dx[2 * k..]).for_each(|(a, r)| *a -= r);
    }
}

/// Sum of per-edge Bernoulli KLs against `p_edge` and its gradient with
/// respect to each probability.
pub fn mask_kl(probs: &SoftGraph, p_edge: f64) -> (f64, Vec<f64>) {
    let n = probs.n();
    let mut total = 0.0;
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = probs.get(i, j);
            total += bernoulli_kl(q, p_edge);
            let qc = q.clamp(1e-12, 1.0 - 1e-12);
            grad[i * n + j] = bernoulli_kl_grad(qc, p_edge);
        }
    }
    (total, grad)
}

impl Parameters for PairEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.net.visit(&join(prefix, "net"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.net.visit_mut(&join(prefix, "net"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

pub fn pairwise_embed(encoder: &PairEncoder, states: &[Vec<f64>]) -> Result<PairwiseEmbedding> {
    if states.len() < 2 {
        return Err(ModelError::InvalidArgument("pairwise embedding needs at least 2 objects".into()));
    }
    if let Some(s) = states.iter().find(|s| s.len() != encoder.state_dim) {
        return Err(ModelError::Dimension {
            what: "pair encoder state",
            expected: encoder.state_dim,
            got: s.len(),
        });
    }
    Ok(encoder.embed_for_pooling(states).embedding)
}

/// One stochastic graph draw. Soft values are the sampled edge-class
/// weights; they are hardened at 0.5.
pub fn infer_graph_variational<R: Rng + ?Sized>(
    encoder: &PairEncoder,
    states: &[Vec<f64>],
    temperature: f64,
    rng: &mut R,
) -> Result<GraphEstimate> {
    pairwise_embed(encoder, states)?;
    let n = states.len();
    let noise: Vec<[f64; 2]> = (0..n * n)
        .map(|_| {
            let g = gumbel_noise(2, rng);
            [g[0], g[1]]
        })
        .collect();
    let sample = encoder.sample_edges(states, temperature, &noise)?;
    Ok(GraphEstimate::new(sample.weights))
}
