use fioc_env::EpisodeRecord;
use fioc_numkit::{flatten, unflatten, zeros_like, AdamState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::window::{loss_and_grad, windows_from_episode, GraphSource, LossBreakdown, Window, WindowNoise};
use super::{WmConfig, WorldModel};
use crate::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per Adam step.
    pub batch_size: usize,
    pub lr: f64,
    pub window: usize,
    pub seed: u64,
    pub source: GraphSource,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 3e-4,
            window: 10,
            seed: 0,
            source: GraphSource::Inferred,
            clip_norm: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidArgument("batch_size must be positive".into()));
        }
        if self.window < 2 {
            return Err(ModelError::InvalidArgument("window must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(ModelError::InvalidArgument("clip_norm must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: WorldModel,
    /// Mean per-window losses, one entry per epoch.
    pub curve: Vec<LossBreakdown>,
}

/// Build a model from `config` and train it on windows cut from `data`.
pub fn train_world_model(data: &[EpisodeRecord], config: WmConfig, train: &TrainConfig) -> Result<TrainOutcome> {
    train.validate()?;
    let windows: Vec<Window> = data.iter().flat_map(|ep| windows_from_episode(ep, train.window)).collect();
    if windows.is_empty() {
        return Err(ModelError::InvalidArgument("training data has no window of length >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let model = WorldModel::new(config, &mut rng)?;
    fit(model, &windows, train, &mut rng)
}

/// Continue training an existing model.
pub fn fit(mut model: WorldModel, windows: &[Window], train: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<TrainOutcome> {
    train.validate()?;
    let mut adam = AdamState::for_params(&model, train.lr);
    let mut curve = Vec::with_capacity(train.epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let s_dim = model.config.s_dim();
    for epoch in 0..train.epochs {
        let last_good = model.clone();
        let diverged = |reason: String, last_good: WorldModel| ModelError::Divergence {
            epoch,
            reason,
            last_good: Box::new(last_good),
        };
        order.shuffle(rng);
        let mut epoch_loss = LossBreakdown::default();
        for batch in order.chunks(train.batch_size) {
            let noises: Vec<WindowNoise> = batch
                .iter()
                .map(|&k| WindowNoise::draw(windows[k].len(), windows[k].n_objects(), s_dim, rng))
                .collect();
            let results: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
                .par_iter()
                .zip(noises.par_iter())
                .map(|(&k, noise)| {
                    let mut g = zeros_like(&model);
                    let l = loss_and_grad(&model, &windows[k], noise, train.source, &mut g)?;
                    Ok((l, flatten(&g)))
                })
                .collect();
            let mut grad: Option<Vec<f64>> = None;
            let mut batch_loss = LossBreakdown::default();
            for r in results {
                let (l, g) = r?;
                batch_loss.accumulate(&l);
                match grad.as_mut() {
                    None => grad = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                }
            }
            if !batch_loss.is_finite() {
                return Err(diverged(format!("non-finite loss {:?}", batch_loss), last_good));
            }
            let mut grad = grad.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            if train.clip_norm > 0.0 {
                let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > train.clip_norm {
                    let k = train.clip_norm / norm;
                    grad.iter_mut().for_each(|v| *v *= k);
                }
            }
            let mut theta = flatten(&model);
            if let Err(e) = adam.step(&mut theta, &grad) {
                return Err(diverged(e.to_string(), last_good));
            }
            unflatten(&mut model, &theta)?;
            epoch_loss.accumulate(&batch_loss);
        }
        curve.push(epoch_loss.scaled(1.0 / windows.len() as f64));
    }
    Ok(TrainOutcome { model, curve })
}
