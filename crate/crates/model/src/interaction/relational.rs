//! Edge-mask inference directly on ground-truth object states: a pair
//! encoder and a graph-gated Gaussian transition trained with the negative
//! ELBO of the edge mask.

use fioc_env::{EpisodeRecord, InteractionGraph, ObjectState};
use fioc_numkit::prob::{gumbel_noise, LN_2PI};
use fioc_numkit::{flatten, join, unflatten, zeros_like, AdamState, Parameters};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::variational::mask_kl;
use super::{GraphEstimate, PairEncoder};
use crate::transition::Transition;
use crate::{ModelError, Result};

/// One transition of true object states. `d` holds position and velocity,
/// `c` mass, radius and a one-hot type.
#[derive(Debug, Clone, PartialEq)]
pub struct GtSample {
    pub d: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub action: Vec<f64>,
    pub d_next: Vec<Vec<f64>>,
    pub graph: InteractionGraph,
}

impl GtSample {
    /// Concatenated `[d, c]` per object, the pair encoder's input.
    pub fn states(&self) -> Vec<Vec<f64>> {
        self.d
            .iter()
            .zip(&self.c)
            .map(|(d, c)| {
                let mut v = d.clone();
                v.extend_from_slice(c);
                v
            })
            .collect()
    }
}

fn dynamic_part(o: &ObjectState) -> Vec<f64> {
    vec![o.pos[0], o.pos[1], o.vel[0], o.vel[1]]
}

fn static_part(o: &ObjectState, n_types: usize) -> Vec<f64> {
    let mut v = vec![o.mass, o.radius];
    v.extend((0..n_types).map(|k| if k == o.type_id { 1.0 } else { 0.0 }));
    v
}

pub fn gt_samples(ep: &EpisodeRecord) -> Vec<GtSample> {
    let nt = ep.config.n_types;
    ep.steps
        .windows(2)
        .map(|w| GtSample {
            d: w[0].gt_state.iter().map(dynamic_part).collect(),
            c: w[0].gt_state.iter().map(|o| static_part(o, nt)).collect(),
            action: w[0].action.to_vec(),
            d_next: w[1].gt_state.iter().map(dynamic_part).collect(),
            graph: w[0].graph.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalConfig {
    pub hidden: usize,
    pub u_dim: usize,
    pub temperature: f64,
    pub p_edge: f64,
    pub sigma_min: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RelationalConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            u_dim: 16,
            temperature: 0.5,
            p_edge: 0.1,
            sigma_min: 1e-3,
            epochs: 60,
            batch: 32,
            lr: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationalModel {
    pub pair: PairEncoder,
    pub transition: Transition,
    pub temperature: f64,
    pub p_edge: f64,
}

impl Parameters for RelationalModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.pair.visit(&join(prefix, "pair"), f);
        self.transition.visit(&join(prefix, "transition"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.pair.visit_mut(&join(prefix, "pair"), f);
        self.transition.visit_mut(&join(prefix, "transition"), f);
    }
}

/// Negative ELBO parts, summed over the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaskLoss {
    /// `-log p(d_{t+1} | d_t, G)`
    pub nll: f64,
    /// Sum of Bernoulli KLs of the edge posteriors against `p_edge`.
    pub kl: f64,
    pub total: f64,
}

impl RelationalModel {
    pub fn new<R: Rng + ?Sized>(d_dim: usize, c_dim: usize, action_dim: usize, cfg: &RelationalConfig, rng: &mut R) -> Self {
        Self {
            pair: PairEncoder::new(d_dim + c_dim, cfg.hidden, cfg.u_dim, rng),
            transition: Transition::new(d_dim, c_dim, d_dim, action_dim, cfg.hidden, cfg.sigma_min, rng),
            temperature: cfg.temperature,
            p_edge: cfg.p_edge,
        }
    }

    /// Noise-free edge probabilities for one sample.
    pub fn infer(&self, sample: &GtSample) -> GraphEstimate {
        GraphEstimate::new(self.pair.edge_probs(&sample.states()))
    }
}

/// Negative ELBO of the edge mask on a batch. `noise[b]` is the Gumbel noise
/// for sample `b`, indexed `src * n + dst`. With `grads`, parameter
/// gradients are accumulated.
pub fn elbo_mask_loss(
    model: &RelationalModel,
    batch: &[GtSample],
    noise: &[Vec<[f64; 2]>],
    mut grads: Option<&mut RelationalModel>,
) -> Result<MaskLoss> {
    if noise.len() != batch.len() {
        return Err(ModelError::InvalidArgument("one noise block per sample is required".into()));
    }
    let mut out = MaskLoss::default();
    for (s, g_noise) in batch.iter().zip(noise) {
        let n = s.d.len();
        let states = s.states();
        let sample = model.pair.sample_edges(&states, model.temperature, g_noise)?;
        let (kl, kl_grad) = mask_kl(&sample.probs, model.p_edge);
        let cache = model.transition.forward(&s.d, &s.d, &s.c, &s.action, &sample.weights);
        let mut gm = vec![Vec::new(); n];
        let mut gs = vec![Vec::new(); n];
        for i in 0..n {
            let p = &cache.prior[i];
            for k in 0..s.d_next[i].len() {
                let z = (s.d_next[i][k] - p.mean[k]) / p.std[k];
                out.nll += 0.5 * z * z + p.std[k].ln() + 0.5 * LN_2PI;
                gm[i].push(-z / p.std[k]);
                gs[i].push(1.0 / p.std[k] - z * z / p.std[k]);
            }
        }
        out.kl += kl;
        if let Some(g) = grads.as_deref_mut() {
            let tg = model.transition.backward(&cache, &gm, &gs, &mut g.transition);
            model.pair.backward_edges(&sample.cache, model.temperature, &tg.weights, &kl_grad, &mut g.pair);
        }
    }
    out.total = out.nll + out.kl;
    Ok(out)
}

/// Fit a relational model on ground-truth transitions.
pub fn train_relational(data: &[GtSample], cfg: &RelationalConfig) -> Result<RelationalModel> {
    let first = data
        .first()
        .ok_or_else(|| ModelError::InvalidArgument("relational training needs data".into()))?;
    let n = first.d.len();
    if n < 2 {
        return Err(ModelError::InvalidArgument("relational training needs at least 2 objects".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = RelationalModel::new(first.d[0].len(), first.c[0].len(), first.action.len(), cfg, &mut rng);
    let mut adam = AdamState::for_params(&model, cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let chunk = 8;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch.max(1)) {
            let noise: Vec<Vec<[f64; 2]>> = batch
                .iter()
                .map(|_| {
                    (0..n * n)
                        .map(|_| {
                            let g = gumbel_noise(2, &mut rng);
                            [g[0], g[1]]
                        })
                        .collect()
                })
                .collect();
            let samples: Vec<GtSample> = batch.iter().map(|&k| data[k].clone()).collect();
            let parts: Vec<Result<Vec<f64>>> = samples
                .par_chunks(chunk)
                .zip(noise.par_chunks(chunk))
                .map(|(s, z)| {
                    let mut g = zeros_like(&model);
                    elbo_mask_loss(&model, s, z, Some(&mut g))?;
                    Ok(flatten(&g))
                })
                .collect();
            let mut grad = vec![0.0; fioc_numkit::num_params(&model)];
            for p in parts {
                for (a, b) in grad.iter_mut().zip(p?) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            let mut theta = flatten(&model);
            adam.step(&mut theta, &grad)?;
            unflatten(&mut model, &theta)?;
        }
    }
    Ok(model)
}
