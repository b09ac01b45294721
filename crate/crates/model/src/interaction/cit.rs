//! Conditional-independence testing of object pairs through the
//! log-likelihood gap between a full and a source-ablated predictor.

use fioc_numkit::prob::{sigmoid, softplus, LN_2PI};
use fioc_numkit::{flatten, join, unflatten, zeros_like, Activation, AdamState, DenseNet, Parameters};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GraphEstimate, SoftGraph};
use crate::{ModelError, Result};

/// One observed transition of per-object dynamic states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub d: Vec<Vec<f64>>,
    pub action: Vec<f64>,
    pub d_next: Vec<Vec<f64>>,
}

pub type Transitions = Vec<TransitionSample>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CitLoss {
    Gaussian,
    /// Student-t likelihood with `nu` degrees of freedom; rare large
    /// residuals do not inflate the fitted scale.
    StudentT { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CitScoring {
    /// Log-likelihood gap at each transition.
    Pointwise,
    /// Gap averaged over a centered window of the given length.
    Window(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub loss: CitLoss,
    pub threshold: f64,
    pub scoring: CitScoring,
    /// Floor on predicted std, in standardized target units.
    pub sigma_min: f64,
    pub seed: u64,
}

impl Default for CitConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 40,
            batch: 64,
            lr: 1e-3,
            loss: CitLoss::StudentT { nu: 3.0 },
            threshold: 0.02,
            scoring: CitScoring::Pointwise,
            sigma_min: 0.2,
            seed: 0,
        }
    }
}

/// Gaussian-head regressor of `d_{t+1}^j - d_t^j` in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub net: DenseNet,
}

impl Parameters for Regressor {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.net.visit(prefix, f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.net.visit_mut(prefix, f);
    }
}

/// Per target `j`, one Gaussian-head regressor shared by the full model and
/// every source ablation. The ablated model for source `i` sees the input
/// block of `i` zeroed and an indicator bit set; it is trained on the same
/// transitions as the full model, so gaps on transitions where the source is
/// irrelevant stay near zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CitModels {
    pub n: usize,
    pub d_dim: usize,
    pub action_dim: usize,
    pub sigma_min: f64,
    pub trained: bool,
    /// Input standardization, length `n * d_dim + action_dim`.
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    /// Target standardization per target object, `n x d_dim`.
    pub out_mean: Vec<Vec<f64>>,
    pub out_std: Vec<Vec<f64>>,
    pub nets: Vec<Regressor>,
}

impl Parameters for CitModels {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, "in_mean"), &[self.in_mean.len()], &self.in_mean);
        f(&join(prefix, "in_std"), &[self.in_std.len()], &self.in_std);
        for j in 0..self.n {
            f(&join(prefix, &format!("out_mean.{j}")), &[self.d_dim], &self.out_mean[j]);
            f(&join(prefix, &format!("out_std.{j}")), &[self.d_dim], &self.out_std[j]);
            self.nets[j].visit(&join(prefix, &format!("net.{j}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let (nin_m, nin_s) = (self.in_mean.len(), self.in_std.len());
        f(&join(prefix, "in_mean"), &[nin_m], &mut self.in_mean);
        f(&join(prefix, "in_std"), &[nin_s], &mut self.in_std);
        for j in 0..self.n {
            f(&join(prefix, &format!("out_mean.{j}")), &[self.d_dim], &mut self.out_mean[j]);
            f(&join(prefix, &format!("out_std.{j}")), &[self.d_dim], &mut self.out_std[j]);
            self.nets[j].visit_mut(&join(prefix, &format!("net.{j}")), f);
        }
    }
}

fn mean_std(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut count = 0.0;
    for r in rows {
        for k in 0..dim {
            sum[k] += r[k];
            sq[k] += r[k] * r[k];
        }
        count += 1.0;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let std = (0..dim)
        .map(|k| {
            let v = (sq[k] / count - mean[k] * mean[k]).max(0.0).sqrt();
            if v > 1e-8 {
                v
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn check_shapes(data: &[TransitionSample], n: usize, d_dim: usize, action_dim: usize) -> Result<()> {
    for (k, s) in data.iter().enumerate() {
        let ok = s.d.len() == n
            && s.d_next.len() == n
            && s.action.len() == action_dim
            && s.d.iter().chain(&s.d_next).all(|v| v.len() == d_dim);
        if !ok {
            return Err(ModelError::InvalidArgument(format!("transition {k} has inconsistent shape")));
        }
    }
    Ok(())
}

impl CitModels {
    fn untrained(n: usize, d_dim: usize, action_dim: usize, config: &CitConfig) -> Self {
        let nin = n * d_dim + action_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let nets = (0..n)
            .map(|_| Regressor {
                net: DenseNet::new(&[nin + n, config.hidden, 2 * d_dim], Activation::Silu, &mut rng),
            })
            .collect();
        Self {
            n,
            d_dim,
            action_dim,
            sigma_min: config.sigma_min,
            trained: false,
            in_mean: vec![0.0; nin],
            in_std: vec![1.0; nin],
            out_mean: vec![vec![0.0; d_dim]; n],
            out_std: vec![vec![1.0; d_dim]; n],
            nets,
        }
    }

    /// Shape-only instance for loading from a checkpoint.
    pub fn empty(n: usize, d_dim: usize, action_dim: usize, hidden: usize) -> Self {
        let config = CitConfig { hidden, ..CitConfig::default() };
        Self::untrained(n, d_dim, action_dim, &config)
    }

    /// Standardized input, with the source block zeroed and its indicator
    /// set when ablating.
    fn input(&self, s: &TransitionSample, drop: Option<usize>) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.in_mean.len() + self.n);
        for d in &s.d {
            x.extend_from_slice(d);
        }
        x.extend_from_slice(&s.action);
        for k in 0..x.len() {
            x[k] = (x[k] - self.in_mean[k]) / self.in_std[k];
        }
        if let Some(i) = drop {
            x[i * self.d_dim..(i + 1) * self.d_dim].iter_mut().for_each(|v| *v = 0.0);
        }
        x.extend((0..self.n).map(|i| if drop == Some(i) { 1.0 } else { 0.0 }));
        x
    }

    fn target(&self, s: &TransitionSample, j: usize) -> Vec<f64> {
        (0..self.d_dim)
            .map(|k| (s.d_next[j][k] - s.d[j][k] - self.out_mean[j][k]) / self.out_std[j][k])
            .collect()
    }

    /// Gaussian log-density of the target under a model, in original units.
    fn log_density(&self, s: &TransitionSample, j: usize, drop: Option<usize>) -> f64 {
        let out = self.nets[j].net.forward(&self.input(s, drop));
        let y = self.target(s, j);
        let d = self.d_dim;
        (0..d)
            .map(|k| {
                let sd = self.sigma_min + softplus(out[d + k]);
                let z = (y[k] - out[k]) / sd;
                -0.5 * z * z - sd.ln() - self.out_std[j][k].ln() - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Per-transition log-likelihood gap `log p_full - log p_ablated`.
    pub fn pointwise_gap(&self, s: &TransitionSample, source: usize, target: usize) -> f64 {
        self.log_density(s, target, None) - self.log_density(s, target, Some(source))
    }

    pub fn fit(data: &[TransitionSample], config: &CitConfig) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| ModelError::InvalidArgument("cit fit needs at least one transition".into()))?;
        let n = first.d.len();
        let d_dim = first.d.first().map_or(0, Vec::len);
        let action_dim = first.action.len();
        if n < 2 || d_dim == 0 {
            return Err(ModelError::InvalidArgument("cit needs at least 2 objects with non-empty states".into()));
        }
        check_shapes(data, n, d_dim, action_dim)?;
        let mut models = Self::untrained(n, d_dim, action_dim, config);
        let nin = n * d_dim + action_dim;
        let (m, s) = mean_std(
            data.iter().map(|t| {
                let mut x: Vec<f64> = t.d.iter().flatten().copied().collect();
                x.extend_from_slice(&t.action);
                x
            }),
            nin,
        );
        models.in_mean = m;
        models.in_std = s;
        for j in 0..n {
            let (m, s) = mean_std(
                data.iter().map(|t| (0..d_dim).map(|k| t.d_next[j][k] - t.d[j][k]).collect()),
                d_dim,
            );
            models.out_mean[j] = m;
            models.out_std[j] = s;
        }
        let snapshot = models.clone();
        let fitted: Vec<Result<Regressor>> = (0..n)
            .into_par_iter()
            .map(|j| snapshot.fit_one(data, j, config, config.seed ^ ((j as u64 + 1) << 32)))
            .collect();
        for (j, r) in fitted.into_iter().enumerate() {
            models.nets[j] = r?;
        }
        models.trained = true;
        Ok(models)
    }

    /// Train the shared regressor of target `j` on the full input and on
    /// every single-source ablation of each transition.
    fn fit_one(&self, data: &[TransitionSample], j: usize, config: &CitConfig, seed: u64) -> Result<Regressor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = self.nets[j].clone();
        let mut adam = AdamState::for_params(&model, config.lr);
        let views: Vec<Option<usize>> = std::iter::once(None).chain((0..self.n).filter(|&i| i != j).map(Some)).collect();
        let xs: Vec<Vec<Vec<f64>>> = data
            .iter()
            .map(|s| views.iter().map(|&v| self.input(s, v)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = data.iter().map(|s| self.target(s, j)).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let d = self.d_dim;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch.max(1)) {
                let mut grads = zeros_like(&model);
                let scale = 1.0 / (batch.len() * views.len()) as f64;
                for &k in batch {
                    for x in &xs[k] {
                        let (out, cache) = model.net.forward_cached(x);
                        let mut dout = vec![0.0; 2 * d];
                        for q in 0..d {
                            let raw = out[d + q];
                            let sd = self.sigma_min + softplus(raw);
                            let z = (ys[k][q] - out[q]) / sd;
                            let (dmu, dsd) = match config.loss {
                                CitLoss::Gaussian => (-z / sd, 1.0 / sd - z * z / sd),
                                CitLoss::StudentT { nu } => {
                                    let w = (nu + 1.0) / nu / (1.0 + z * z / nu);
                                    (-w * z / sd, 1.0 / sd - w * z * z / sd)
                                }
                            };
                            dout[q] = dmu * scale;
                            dout[d + q] = dsd * sigmoid(raw) * scale;
                        }
                        model.net.backward(&cache, &dout, &mut grads.net);
                    }
                }
                let mut flat = flatten(&model);
                adam.step(&mut flat, &flatten(&grads))?;
                unflatten(&mut model, &flat)?;
            }
        }
        Ok(model)
    }
}

/// Mean log-likelihood gap over `data`, clipped below at zero.
pub fn cmi_score(data: &[TransitionSample], source: usize, target: usize, models: &CitModels) -> Result<f64> {
    if !models.trained {
        return Err(ModelError::InvalidArgument("cit models are untrained".into()));
    }
    if source == target {
        return Err(ModelError::InvalidArgument("cit source and target must differ".into()));
    }
    if source >= models.n || target >= models.n {
        return Err(ModelError::InvalidArgument(format!("object index out of range for {} objects", models.n)));
    }
    if data.is_empty() {
        return Err(ModelError::InvalidArgument("cmi score needs data".into()));
    }
    check_shapes(data, models.n, models.d_dim, models.action_dim)?;
    let total: f64 = data.iter().map(|s| models.pointwise_gap(s, source, target)).sum();
    Ok((total / data.len() as f64).max(0.0))
}

/// Per-transition graphs for a contiguous window of transitions. Edge
/// `(i, j)` is set iff the (pointwise or window-averaged) score reaches
/// `threshold`; soft values are `min(score / threshold, 1)`.
pub fn infer_graph_cit(
    models: &CitModels,
    window: &[TransitionSample],
    threshold: f64,
    scoring: CitScoring,
) -> Result<Vec<GraphEstimate>> {
    if !(threshold > 0.0) {
        return Err(ModelError::InvalidArgument(format!("cit threshold must be positive, got {threshold}")));
    }
    if !models.trained {
        return Err(ModelError::InvalidArgument("cit models are untrained".into()));
    }
    check_shapes(window, models.n, models.d_dim, models.action_dim)?;
    let n = models.n;
    let t_len = window.len();
    let mut gaps = vec![vec![0.0; n * n]; t_len];
    for (t, s) in window.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    gaps[t][i * n + j] = models.pointwise_gap(s, i, j);
                }
            }
        }
    }
    Ok(scores_to_graphs(n, &gaps, threshold, scoring))
}

pub(crate) fn scores_to_graphs(n: usize, gaps: &[Vec<f64>], threshold: f64, scoring: CitScoring) -> Vec<GraphEstimate> {
    let t_len = gaps.len();
    (0..t_len)
        .map(|t| {
            let (lo, hi) = match scoring {
                CitScoring::Pointwise => (t, t + 1),
                CitScoring::Window(w) => {
                    let half = w.max(1) / 2;
                    (t.saturating_sub(half), (t + half + 1).min(t_len))
                }
            };
            let mut soft = SoftGraph::empty(n);
            let mut hard = fioc_env::InteractionGraph::empty(n);
            for k in 0..n * n {
                let (i, j) = (k / n, k % n);
                if i == j {
                    continue;
                }
                let score = gaps[lo..hi].iter().map(|g| g[k]).sum::<f64>() / (hi - lo) as f64;
                soft.set(i, j, (score.max(0.0) / threshold).min(1.0));
                hard.set(i, j, score >= threshold);
            }
            GraphEstimate { soft, hard }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Two scalar objects; `d_next[1] = d[1] + beta * d[0] + noise`.
    fn linear_gaussian(nsamp: usize, beta: f64, sx: f64, sn: f64, seed: u64) -> Transitions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nx = Normal::new(0.0, sx).unwrap();
        let nn = Normal::new(0.0, sn).unwrap();
        (0..nsamp)
            .map(|_| {
                let x0 = nx.sample(&mut rng);
                let x1 = nx.sample(&mut rng);
                let a = rng.random_range(-1.0..1.0);
                TransitionSample {
                    d: vec![vec![x0], vec![x1]],
                    action: vec![a],
                    d_next: vec![vec![x0 + nn.sample(&mut rng)], vec![x1 + beta * x0 + nn.sample(&mut rng)]],
                }
            })
            .collect()
    }

    fn config() -> CitConfig {
        CitConfig {
            hidden: 16,
            epochs: 30,
            batch: 100,
            lr: 3e-3,
            loss: CitLoss::Gaussian,
            ..CitConfig::default()
        }
    }

    #[test]
    fn independent_source_scores_near_zero() {
        let train = linear_gaussian(5000, 0.0, 1.0, 0.5, 1);
        let test = linear_gaussian(5000, 0.0, 1.0, 0.5, 2);
        let m = CitModels::fit(&train, &config()).unwrap();
        let s = cmi_score(&test, 0, 1, &m).unwrap();
        assert!(s < 0.005, "{s}");
    }

    #[test]
    fn coupled_source_matches_gaussian_cmi() {
        let (beta, sx, sn) = (0.8, 1.0, 0.5);
        let train = linear_gaussian(5000, beta, sx, sn, 3);
        let test = linear_gaussian(5000, beta, sx, sn, 4);
        let m = CitModels::fit(&train, &config()).unwrap();
        let s = cmi_score(&test, 0, 1, &m).unwrap();
        let expected = 0.5 * (1.0 + beta * beta * sx * sx / (sn * sn)).ln();
        assert!((s - expected).abs() < 0.2 * expected, "{s} vs {expected}");
    }

    #[test]
    fn rejects_untrained_and_self_test() {
        let data = linear_gaussian(10, 0.0, 1.0, 1.0, 0);
        let m = CitModels::empty(2, 1, 1, 4);
        assert!(cmi_score(&data, 0, 1, &m).is_err());
        let trained = CitModels::fit(&data, &CitConfig { epochs: 1, ..config() }).unwrap();
        assert!(cmi_score(&data, 1, 1, &trained).is_err());
        assert!(infer_graph_cit(&trained, &data, 0.0, CitScoring::Pointwise).is_err());
    }

    #[test]
    fn zero_scores_give_empty_graphs() {
        let gaps = vec![vec![0.0; 9]; 4];
        for g in scores_to_graphs(3, &gaps, 0.02, CitScoring::Pointwise) {
            assert!(g.hard.is_empty());
        }
        assert_eq!(CitConfig::default().threshold, 0.02);
    }

    #[test]
    fn threshold_and_soft_values() {
        let mut gaps = vec![vec![0.0; 4]; 3];
        gaps[1][1] = 0.02;
        gaps[1][2] = 0.01;
        let g = scores_to_graphs(2, &gaps, 0.02, CitScoring::Pointwise);
        assert!(g[1].hard.get(0, 1));
        assert!(!g[1].hard.get(1, 0));
        assert!((g[1].soft.get(1, 0) - 0.5).abs() < 1e-12);
        assert!(g[0].hard.is_empty() && g[2].hard.is_empty());
        let w = scores_to_graphs(2, &gaps, 0.02, CitScoring::Window(3));
        assert!(!w[1].hard.get(0, 1));
    }
}
