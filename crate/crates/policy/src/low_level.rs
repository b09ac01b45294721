//! Goal-conditioned Gaussian policy: the policy-gradient alternative to MPC.
//! Pretrained by cloning MPC actions, then fine-tuned with a
//! likelihood-ratio gradient.

use fioc_numkit::{flatten, join, unflatten, zeros_like, Activation, AdamState, DenseNet, Parameters};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::targets::GoalStates;
use crate::{PolicyError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowLevelMode {
    Mpc,
    PolicyGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgConfig {
    pub hidden: usize,
    pub lr: f64,
    pub bc_epochs: usize,
    pub batch: usize,
    pub init_log_std: f64,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 3e-4,
            bc_epochs: 50,
            batch: 64,
            init_log_std: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgPolicy {
    pub net: DenseNet,
    pub log_std: Vec<f64>,
    pub action_bound: f64,
}

impl Parameters for PgPolicy {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.net.visit(&join(prefix, "net"), f);
        f(&join(prefix, "log_std"), &[self.log_std.len()], &self.log_std);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.net.visit_mut(&join(prefix, "net"), f);
        let n = self.log_std.len();
        f(&join(prefix, "log_std"), &[n], &mut self.log_std);
    }
}

/// Per object: features, goal offset (zero when unconstrained) and a goal bit.
pub fn pg_input(features: &[Vec<f64>], goals: &GoalStates) -> Vec<f64> {
    let mut x = Vec::new();
    for (f, g) in features.iter().zip(&goals.targets) {
        x.extend_from_slice(f);
        match g {
            Some(g) => {
                x.extend(g.iter().zip(f).map(|(a, b)| a - b));
                x.push(1.0);
            }
            None => {
                x.extend(std::iter::repeat_n(0.0, f.len()));
                x.push(0.0);
            }
        }
    }
    x
}

/// One logged low-level decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PgSample {
    pub input: Vec<f64>,
    pub action: [f64; 2],
    pub advantage: f64,
}

impl PgPolicy {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, action_bound: f64, cfg: &PgConfig, rng: &mut R) -> Self {
        let mut net = DenseNet::new(&[input_dim, cfg.hidden, cfg.hidden, 2], Activation::Silu, rng);
        net.scale_output(0.1);
        Self {
            net,
            log_std: vec![cfg.init_log_std; 2],
            action_bound,
        }
    }

    pub fn mean(&self, input: &[f64]) -> Result<[f64; 2]> {
        let m = self.net.try_forward(input)?;
        Ok([m[0], m[1]])
    }

    /// Log-density of `action` under the unclipped Gaussian.
    pub fn log_prob(&self, input: &[f64], action: [f64; 2]) -> Result<f64> {
        let m = self.mean(input)?;
        Ok((0..2)
            .map(|k| {
                let s = self.log_std[k].exp();
                let z = (action[k] - m[k]) / s;
                -0.5 * z * z - self.log_std[k] - 0.5 * fioc_numkit::prob::LN_2PI
            })
            .sum())
    }

    /// Sampled (or mean, when `greedy`) action, scaled into the norm bound.
    pub fn act<R: Rng + ?Sized>(&self, input: &[f64], greedy: bool, rng: &mut R) -> Result<[f64; 2]> {
        let m = self.mean(input)?;
        let mut a = m;
        if !greedy {
            for k in 0..2 {
                let e: f64 = StandardNormal.sample(rng);
                a[k] += self.log_std[k].exp() * e;
            }
        }
        Ok(self.clip(a))
    }

    pub fn clip(&self, a: [f64; 2]) -> [f64; 2] {
        let n = a[0].hypot(a[1]);
        if n > self.action_bound {
            [a[0] * self.action_bound / n, a[1] * self.action_bound / n]
        } else {
            a
        }
    }

    /// Regress the mean onto `actions`; returns the final epoch's MSE.
    pub fn behavior_clone<R: Rng + ?Sized>(
        &mut self,
        inputs: &[Vec<f64>],
        actions: &[[f64; 2]],
        cfg: &PgConfig,
        rng: &mut R,
    ) -> Result<f64> {
        if inputs.is_empty() || inputs.len() != actions.len() {
            return Err(PolicyError::InvalidArgument("behavior cloning needs matching, non-empty inputs and actions".into()));
        }
        let mut adam = AdamState::for_params(&self.net, cfg.lr);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut last = f64::INFINITY;
        for _ in 0..cfg.bc_epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch.max(1)) {
                let mut g = zeros_like(&self.net);
                let scale = 1.0 / batch.len() as f64;
                for &k in batch {
                    let (out, cache) = self.net.forward_cached(&inputs[k]);
                    let d = [out[0] - actions[k][0], out[1] - actions[k][1]];
                    total += d[0] * d[0] + d[1] * d[1];
                    self.net.backward(&cache, &[2.0 * scale * d[0], 2.0 * scale * d[1]], &mut g);
                }
                let mut theta = flatten(&self.net);
                adam.step(&mut theta, &flatten(&g))?;
                unflatten(&mut self.net, &theta)?;
            }
            last = total / (2 * inputs.len()) as f64;
        }
        Ok(last)
    }

    /// One ascent step on `mean(A * log pi(a | x))`.
    pub fn pg_step(&mut self, samples: &[PgSample], opt: &mut AdamState) -> Result<()> {
        if samples.is_empty() {
            return Err(PolicyError::InvalidArgument("policy-gradient step needs samples".into()));
        }
        let mut g = zeros_like(self);
        let scale = 1.0 / samples.len() as f64;
        for s in samples {
            let (m, cache) = self.net.forward_cached(&s.input);
            let mut dmean = [0.0; 2];
            for k in 0..2 {
                let var = (2.0 * self.log_std[k]).exp();
                let diff = s.action[k] - m[k];
                // descent on the negated objective
                dmean[k] = -scale * s.advantage * diff / var;
                g.log_std[k] += -scale * s.advantage * (diff * diff / var - 1.0);
            }
            self.net.backward(&cache, &dmean, &mut g.net);
        }
        let mut theta = flatten(self);
        opt.step(&mut theta, &flatten(&g))?;
        unflatten(self, &theta)?;
        Ok(())
    }
}
