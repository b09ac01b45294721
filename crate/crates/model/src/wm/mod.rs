//! The factored world model and its joint training loop.

pub mod losses;
pub mod rollout;
pub mod train;
pub mod window;

use fioc_numkit::{join, Activation, DenseNet, GruCell, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::interaction::{Codebook, PairEncoder, Regime};
use crate::transition::{Gaussian, Transition};
use crate::{check_dim, ModelError, Result};

pub use losses::{contrastive_loss, draw_pairing, static_loss, ContrastiveOut};
pub use rollout::{rollout_mse, Filtered};
pub use train::{train_world_model, TrainConfig, TrainOutcome};
pub use window::{loss_total, windows_from_episode, GraphSource, LossBreakdown, Window, WindowNoise};

/// Weights of the auxiliary loss terms (reconstruction has weight 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub reward: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.05,
            gamma: 0.1,
            eta: 0.2,
            reward: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmConfig {
    pub obs_dim: usize,
    pub n_objects: usize,
    pub action_dim: usize,
    /// Latent sub-vector feeding `f_c`.
    pub s_static: usize,
    /// Latent sub-vector feeding `f_d`; also the dimension the prior models.
    pub s_dynamic: usize,
    pub c_dim: usize,
    pub d_dim: usize,
    pub gru_hidden: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub factor_hidden: usize,
    pub trans_hidden: usize,
    pub reward_hidden: usize,
    pub pair_hidden: usize,
    pub u_dim: usize,
    pub codebook_size: usize,
    pub code_hidden: usize,
    pub regime: Regime,
    /// Gumbel-softmax temperature for sampled edges.
    pub temperature: f64,
    pub p_edge: f64,
    pub commitment: f64,
    pub contrastive_temperature: f64,
    pub sigma_min: f64,
    /// Std of the prior on static dims after the first step, centred on the
    /// previous sample.
    pub static_prior_std: f64,
    pub weights: LossWeights,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            obs_dim: 9,
            n_objects: 3,
            action_dim: 2,
            s_static: 6,
            s_dynamic: 8,
            c_dim: 6,
            d_dim: 8,
            gru_hidden: 16,
            enc_hidden: 32,
            dec_hidden: 32,
            factor_hidden: 16,
            trans_hidden: 32,
            reward_hidden: 32,
            pair_hidden: 32,
            u_dim: 8,
            codebook_size: 16,
            code_hidden: 32,
            regime: Regime::Variational,
            temperature: 0.5,
            p_edge: 0.1,
            commitment: 0.25,
            contrastive_temperature: 0.1,
            sigma_min: 1e-3,
            static_prior_std: 0.1,
            weights: LossWeights::default(),
        }
    }
}

impl WmConfig {
    pub fn s_dim(&self) -> usize {
        self.s_static + self.s_dynamic
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("obs_dim", self.obs_dim),
            ("action_dim", self.action_dim),
            ("s_static", self.s_static),
            ("s_dynamic", self.s_dynamic),
            ("c_dim", self.c_dim),
            ("d_dim", self.d_dim),
            ("gru_hidden", self.gru_hidden),
            ("u_dim", self.u_dim),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidArgument(format!("{name} must be positive")));
        }
        if self.n_objects < 2 {
            return Err(ModelError::InvalidArgument("the world model needs at least 2 objects".into()));
        }
        if self.codebook_size < 2 {
            return Err(ModelError::InvalidArgument("codebook needs at least 2 prototypes".into()));
        }
        let w = &self.weights;
        for (name, v) in [("alpha", w.alpha), ("beta", w.beta), ("gamma", w.gamma), ("eta", w.eta), ("reward", w.reward)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidArgument(format!("loss weight {name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("contrastive_temperature", self.contrastive_temperature),
            ("sigma_min", self.sigma_min),
            ("static_prior_std", self.static_prior_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.p_edge > 0.0 && self.p_edge < 1.0) {
            return Err(ModelError::InvalidArgument(format!("p_edge must lie in (0, 1), got {}", self.p_edge)));
        }
        Ok(())
    }
}

/// Recurrent state carried between timesteps, per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Carry {
    pub s: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl Carry {
    pub fn zeros(n: usize, s_dim: usize, hidden: usize) -> Self {
        Self {
            s: vec![vec![0.0; s_dim]; n],
            h: vec![vec![0.0; hidden]; n],
        }
    }
}

/// Output of one encoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub s: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub posterior: Vec<Gaussian>,
    pub carry: Carry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub config: WmConfig,
    pub gru: GruCell,
    /// `[o, h] -> [mean, raw std]` over the full latent.
    pub encoder: DenseNet,
    /// `[c, d] -> o`
    pub decoder: DenseNet,
    pub f_c: DenseNet,
    pub f_d: DenseNet,
    /// Prior over the dynamic latent sub-vector.
    pub transition: Transition,
    pub pair: PairEncoder,
    pub codebook: Codebook,
    /// `[c_0, d_0, c_i, d_i, a] -> r`, averaged over `i >= 1`.
    pub reward: DenseNet,
}

impl WorldModel {
    pub fn new<R: Rng + ?Sized>(config: WmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let s_dim = c.s_dim();
        let gru = GruCell::new(s_dim, c.gru_hidden, rng);
        let encoder = DenseNet::new(&[c.obs_dim + c.gru_hidden, c.enc_hidden, 2 * s_dim], Activation::Silu, rng);
        let decoder = DenseNet::new(&[c.c_dim + c.d_dim, c.dec_hidden, c.obs_dim], Activation::Silu, rng);
        let f_c = DenseNet::new(&[c.s_static, c.factor_hidden, c.c_dim], Activation::Silu, rng);
        let f_d = DenseNet::new(&[c.s_dynamic, c.factor_hidden, c.d_dim], Activation::Silu, rng);
        let transition = Transition::new(c.d_dim, c.c_dim, c.s_dynamic, c.action_dim, c.trans_hidden, c.sigma_min, rng);
        let pair = PairEncoder::new(s_dim, c.pair_hidden, c.u_dim, rng);
        let mut codebook = Codebook::new(c.codebook_size, c.u_dim, c.n_objects, c.code_hidden, rng);
        codebook.commitment = c.commitment;
        let reward = DenseNet::new(
            &[2 * (c.c_dim + c.d_dim) + c.action_dim, c.reward_hidden, 1],
            Activation::Silu,
            rng,
        );
        Ok(Self {
            config,
            gru,
            encoder,
            decoder,
            f_c,
            f_d,
            transition,
            pair,
            codebook,
            reward,
        })
    }

    /// Same shapes, all parameters zero. Used as a gradient buffer and in
    /// tests.
    pub fn zeros(config: WmConfig) -> Self {
        let mut m = Self::new(config, &mut ChaCha8Rng::seed_from_u64(0)).expect("valid config");
        m.visit_mut("", &mut |_, _, v| v.fill(0.0));
        m
    }

    pub fn n_objects(&self) -> usize {
        self.config.n_objects
    }

    /// `(c, d)` for one full latent vector.
    pub fn factor(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.config.s_static;
        (self.f_c.forward(&s[..k]), self.f_d.forward(&s[k..]))
    }

    /// Posterior for one slot given its observation and recurrent state.
    fn posterior(&self, obs: &[f64], h: &[f64]) -> Gaussian {
        let s_dim = self.config.s_dim();
        let mut x = obs.to_vec();
        x.extend_from_slice(h);
        let out = self.encoder.forward(&x);
        Gaussian::from_raw(out[..s_dim].to_vec(), out[s_dim..].to_vec(), self.config.sigma_min)
    }

    /// One encoder step. With `eps` the latent is the reparameterized
    /// sample `mean + std * eps`; without it, the posterior mean.
    pub fn encode_with(&self, obs: &[Vec<f64>], carry: &Carry, eps: Option<&[Vec<f64>]>) -> Result<Encoded> {
        let n = obs.len();
        check_dim("encoder slots", carry.s.len(), n)?;
        let s_dim = self.config.s_dim();
        let mut out = Encoded {
            s: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            posterior: Vec::with_capacity(n),
            carry: Carry { s: Vec::new(), h: Vec::new() },
        };
        for i in 0..n {
            check_dim("observation", self.config.obs_dim, obs[i].len())?;
            let h = self.gru.forward(&carry.s[i], &carry.h[i]);
            let q = self.posterior(&obs[i], &h);
            let s: Vec<f64> = match eps {
                Some(e) => {
                    check_dim("latent noise", s_dim, e[i].len())?;
                    (0..s_dim).map(|k| q.mean[k] + q.std[k] * e[i][k]).collect()
                }
                None => q.mean.clone(),
            };
            let (c, d) = self.factor(&s);
            out.carry.h.push(h);
            out.carry.s.push(s.clone());
            out.s.push(s);
            out.c.push(c);
            out.d.push(d);
            out.posterior.push(q);
        }
        Ok(out)
    }

    /// Reparameterized sample from the posterior; advances the carry.
    pub fn encode<R: Rng + ?Sized>(&self, obs: &[Vec<f64>], carry: &Carry, rng: &mut R) -> Result<Encoded> {
        let s_dim = self.config.s_dim();
        let eps: Vec<Vec<f64>> = (0..obs.len())
            .map(|_| (0..s_dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        self.encode_with(obs, carry, Some(&eps))
    }

    pub fn encode_mean(&self, obs: &[Vec<f64>], carry: &Carry) -> Result<Encoded> {
        self.encode_with(obs, carry, None)
    }

    pub fn decode_obs(&self, c: &[f64], d: &[f64]) -> Vec<f64> {
        let mut x = c.to_vec();
        x.extend_from_slice(d);
        self.decoder.forward(&x)
    }

    pub(crate) fn reward_input(&self, c: &[Vec<f64>], d: &[Vec<f64>], i: usize, action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.reward.input_dim());
        x.extend_from_slice(&c[0]);
        x.extend_from_slice(&d[0]);
        x.extend_from_slice(&c[i]);
        x.extend_from_slice(&d[i]);
        x.extend_from_slice(action);
        x
    }

    /// Predicted reward: mean over non-agent objects of the pairwise head.
    pub fn reward_head(&self, c: &[Vec<f64>], d: &[Vec<f64>], action: &[f64]) -> f64 {
        let n = c.len();
        (1..n)
            .map(|i| self.reward.forward(&self.reward_input(c, d, i, action))[0])
            .sum::<f64>()
            / (n - 1) as f64
    }
}

impl Parameters for WorldModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.gru.visit(&join(prefix, "gru"), f);
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.f_c.visit(&join(prefix, "f_c"), f);
        self.f_d.visit(&join(prefix, "f_d"), f);
        self.transition.visit(&join(prefix, "transition"), f);
        self.pair.visit(&join(prefix, "pair"), f);
        self.codebook.visit(&join(prefix, "codebook"), f);
        self.reward.visit(&join(prefix, "reward"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.gru.visit_mut(&join(prefix, "gru"), f);
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.f_c.visit_mut(&join(prefix, "f_c"), f);
        self.f_d.visit_mut(&join(prefix, "f_d"), f);
        self.transition.visit_mut(&join(prefix, "transition"), f);
        self.pair.visit_mut(&join(prefix, "pair"), f);
        self.codebook.visit_mut(&join(prefix, "codebook"), f);
        self.reward.visit_mut(&join(prefix, "reward"), f);
    }
}
