//! Cross-entropy method with a diagonal Gaussian sampling distribution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::{NumError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Planning horizon; the optimizer itself only validates it, callers use
    /// it to size the decision vector.
    pub horizon: usize,
    pub init_std: f64,
    /// Optional finite-difference gradient refinement of the best candidate.
    pub refine_rate: Option<f64>,
    pub min_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            iterations: 6,
            horizon: 8,
            init_std: 1.0,
            refine_rate: None,
            min_std: 1e-3,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites == 0 || self.elites > self.population {
            return Err(NumError::InvalidArgument(format!(
                "cem elites must be in 1..={}, got {}",
                self.population, self.elites
            )));
        }
        if self.horizon == 0 || self.iterations == 0 {
            return Err(NumError::InvalidArgument("cem horizon and iterations must be >= 1".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(NumError::InvalidArgument("cem init_std must be positive".into()));
        }
        Ok(())
    }
}

/// Extra knobs for [`cem_optimize_with`].
pub struct CemOptions<'a> {
    pub init_mean: Vec<f64>,
    /// Candidates injected verbatim into the first population.
    pub injected: Vec<Vec<f64>>,
    /// Projection applied to every sample before evaluation (bounds etc.).
    pub project: Option<&'a (dyn Fn(&mut [f64]) + Sync)>,
}

impl CemOptions<'_> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            init_mean: vec![0.0; dim],
            injected: Vec::new(),
            project: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CemOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Final sampling mean.
    pub mean: Vec<f64>,
    /// Best value seen after each iteration.
    pub history: Vec<f64>,
}

pub fn cem_optimize<F, R>(objective: F, dim: usize, config: &CemConfig, rng: &mut R) -> Result<CemOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    cem_optimize_with(objective, CemOptions::zeros(dim), config, rng)
}

pub fn cem_optimize_with<F, R>(
    objective: F,
    options: CemOptions<'_>,
    config: &CemConfig,
    rng: &mut R,
) -> Result<CemOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    config.validate()?;
    let dim = options.init_mean.len();
    if dim == 0 {
        return Err(NumError::InvalidArgument("cem dimension must be >= 1".into()));
    }
    let mut mean = options.init_mean.clone();
    let mut std = vec![config.init_std; dim];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(config.population);
        if it == 0 {
            samples.extend(options.injected.iter().take(config.population).cloned());
        }
        while samples.len() < config.population {
            let x: Vec<f64> = (0..dim)
                .map(|k| {
                    let e: f64 = StandardNormal.sample(rng);
                    mean[k] + std[k] * e
                })
                .collect();
            samples.push(x);
        }
        if let Some(project) = options.project {
            samples.iter_mut().for_each(|s| project(s));
        }
        let values: Vec<f64> = samples.par_iter().map(|s| objective(s)).collect();
        let mut order: Vec<usize> = (0..samples.len()).filter(|&k| values[k].is_finite()).collect();
        if order.is_empty() {
            return Err(NumError::NonFinite(format!(
                "objective non-finite on all {} candidates at iteration {it}",
                samples.len()
            )));
        }
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, v)| values[top] < *v) {
            best = Some((samples[top].clone(), values[top]));
        }
        let elites = &order[..config.elites.min(order.len())];
        let ne = elites.len() as f64;
        for k in 0..dim {
            let m = elites.iter().map(|&e| samples[e][k]).sum::<f64>() / ne;
            let var = elites.iter().map(|&e| (samples[e][k] - m).powi(2)).sum::<f64>() / ne;
            mean[k] = m;
            std[k] = var.sqrt().max(config.min_std);
        }
        history.push(best.as_ref().unwrap().1);
    }

    let (mut best_x, mut best_v) = best.expect("at least one iteration");
    if let Some(lr) = config.refine_rate {
        let h = 1e-4;
        let grad: Vec<f64> = (0..dim)
            .into_par_iter()
            .map(|k| {
                let mut p = best_x.clone();
                p[k] += h;
                let mut m = best_x.clone();
                m[k] -= h;
                (objective(&p) - objective(&m)) / (2.0 * h)
            })
            .collect();
        if grad.iter().all(|g| g.is_finite()) {
            let mut cand: Vec<f64> = best_x.iter().zip(&grad).map(|(x, g)| x - lr * g).collect();
            if let Some(project) = options.project {
                project(&mut cand);
            }
            let v = objective(&cand);
            if v.is_finite() && v < best_v {
                best_x = cand;
                best_v = v;
                if let Some(last) = history.last_mut() {
                    *last = best_v;
                }
            }
        }
    }

    Ok(CemOutcome {
        best: best_x,
        best_value: best_v,
        mean,
        history,
    })
}
