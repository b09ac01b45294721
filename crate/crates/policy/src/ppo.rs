//! Clipped-surrogate PPO for the subgoal policy.

use fioc_numkit::{flatten, unflatten, zeros_like, AdamState};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::high_level::{masked_log_softmax, HighLevelPolicy};
use crate::{PolicyError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.1,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.1,
            value_coef: 0.5,
            lr: 1e-4,
            epochs: 4,
            minibatch: 256,
        }
    }
}

/// One high-level decision.
#[derive(Debug, Clone, PartialEq)]
pub struct HlStep {
    pub input: Vec<f64>,
    pub mask: Vec<bool>,
    pub pair: usize,
    pub log_prob: f64,
    pub value: f64,
    /// `r_task + lambda_div * r_div` for the decision.
    pub reward: f64,
    /// Last decision of its episode.
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub steps: Vec<HlStep>,
}

/// GAE advantages and returns. A trailing segment without `done` is
/// bootstrapped with zero.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] || t + 1 == n { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose ratio fell outside the clip range.
    pub clip_fraction: f64,
    /// Every clamped ratio used in a surrogate term.
    pub clamped_ratios: Vec<f64>,
}

/// Several epochs of minibatch updates on `buffer`. `opt` must have been
/// created for `policy`.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut HighLevelPolicy,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    opt: &mut AdamState,
    rng: &mut R,
) -> Result<PpoStats> {
    if buffer.steps.is_empty() {
        return Err(PolicyError::InvalidArgument("ppo update needs a non-empty buffer".into()));
    }
    let steps = &buffer.steps;
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
    let dones: Vec<bool> = steps.iter().map(|s| s.done).collect();
    let (adv, ret) = gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    let mut stats = PpoStats::default();
    let mut count = 0usize;
    let mut clipped = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.minibatch.max(1)) {
            let mut g = zeros_like(policy);
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let s = &steps[k];
                let (logits, cache) = policy.net.forward_cached(&s.input);
                let logp = masked_log_softmax(&logits, &s.mask)?;
                let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                let entropy: f64 = -p.iter().zip(&logp).filter(|(q, _)| **q > 0.0).map(|(q, l)| q * l).sum::<f64>();
                let ratio = (logp[s.pair] - s.log_prob).exp();
                let clamped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let a = adv[k];
                let unclipped_active = ratio * a <= clamped * a;
                stats.policy_loss -= (ratio * a).min(clamped * a) * scale;
                stats.entropy += entropy * scale;
                stats.clamped_ratios.push(clamped);
                if clamped != ratio {
                    clipped += 1;
                }
                count += 1;
                // d(loss)/d(logp_a) for the surrogate
                let dlogp = if unclipped_active { -a * ratio } else { 0.0 };
                let mut dz = vec![0.0; logits.len()];
                for j in 0..logits.len() {
                    if !s.mask[j] {
                        continue;
                    }
                    let ind = if j == s.pair { 1.0 } else { 0.0 };
                    dz[j] += dlogp * (ind - p[j]);
                    // entropy ascent: dH/dz_j = -p_j (log p_j + H)
                    dz[j] += cfg.entropy_coef * p[j] * (logp[j] + entropy);
                    dz[j] *= scale;
                }
                policy.net.backward(&cache, &dz, &mut g.net);
                let (v, vc) = policy.value.forward_cached(&s.input);
                let err = v[0] - ret[k];
                stats.value_loss += err * err * scale;
                policy.value.backward(&vc, &[2.0 * cfg.value_coef * err * scale], &mut g.value);
            }
            let mut theta = flatten(policy);
            opt.step(&mut theta, &flatten(&g))?;
            unflatten(policy, &theta)?;
        }
    }
    let updates = (cfg.epochs * steps.len().div_ceil(cfg.minibatch.max(1))).max(1) as f64;
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.clip_fraction = clipped as f64 / count.max(1) as f64;
    Ok(stats)
}
