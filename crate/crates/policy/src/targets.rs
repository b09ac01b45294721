//! Goal states for a subgoal: a geometric oracle on true states and a
//! learned inverse model over latents.

use fioc_env::{InteractionGraph, WorldState};
use fioc_numkit::{flatten, join, unflatten, zeros_like, Activation, AdamState, DenseNet, Parameters};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::subgoal::SubgoalGraph;
use crate::{PolicyError, Result};

/// Per-object goal vectors; `None` entries are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalStates {
    pub targets: Vec<Option<Vec<f64>>>,
}

impl GoalStates {
    /// Mean squared error over constrained entries.
    pub fn mse(&self, features: &[Vec<f64>]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (f, g) in features.iter().zip(&self.targets) {
            if let Some(g) = g {
                sum += fioc_numkit::sq_dist(f, g);
                count += g.len();
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn pair(n: usize, i: usize, gi: Vec<f64>, j: usize, gj: Vec<f64>) -> Self {
        let mut targets = vec![None; n];
        targets[i] = Some(gi);
        targets[j] = Some(gj);
        Self { targets }
    }
}

/// Separation aimed for when breaking a contact, in units of the radius sum.
pub const RELEASE_FACTOR: f64 = 2.0;

/// Goal positions for `subgoal` on true states. The anchor is placed along
/// its current direction from the target, at contact distance to activate
/// or at [`RELEASE_FACTOR`] times it to release; the target stays put. A
/// satisfied subgoal returns the current positions.
pub fn geometric_targets(state: &WorldState, subgoal: &SubgoalGraph) -> Result<GoalStates> {
    let n = state.n();
    let (i, j) = (subgoal.anchor, subgoal.target);
    if i.max(j) >= n {
        return Err(PolicyError::InvalidArgument(format!("subgoal ({i}, {j}) out of range for {n} objects")));
    }
    let (a, b) = (&state.objects[i], &state.objects[j]);
    let graph = fioc_env::ground_truth_graph(state);
    if subgoal.satisfied(&graph) {
        return Ok(GoalStates::pair(n, i, a.pos.to_vec(), j, b.pos.to_vec()));
    }
    let reach = a.radius + b.radius;
    let sep = if subgoal.activate { reach } else { RELEASE_FACTOR * reach };
    let d = [a.pos[0] - b.pos[0], a.pos[1] - b.pos[1]];
    let dist = d[0].hypot(d[1]);
    let dir = if dist > 0.0 { [d[0] / dist, d[1] / dist] } else { [1.0, 0.0] };
    let gi = vec![b.pos[0] + sep * dir[0], b.pos[1] + sep * dir[1]];
    Ok(GoalStates::pair(n, i, gi, j, b.pos.to_vec()))
}

/// One logged change of a pair's contact state: object features some steps
/// before it and the goal features at the change.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseSample {
    pub si: Vec<f64>,
    pub sj: Vec<f64>,
    pub activate: bool,
    pub gi: Vec<f64>,
    pub gj: Vec<f64>,
}

/// Samples from every contact onset (`activate`) and release along an
/// episode. `inputs[t][i]` feed the regressor, `goals[t][i]` are its
/// targets; each change at `t'` yields samples from `t' - lookback .. t'`.
pub fn contact_events(
    inputs: &[Vec<Vec<f64>>],
    goals: &[Vec<Vec<f64>>],
    graphs: &[InteractionGraph],
    lookback: usize,
) -> Vec<InverseSample> {
    let mut out = Vec::new();
    for t1 in 1..graphs.len().min(inputs.len()).min(goals.len()) {
        let n = graphs[t1].n();
        for i in 0..n {
            for j in 0..n {
                if i == j || graphs[t1].get(i, j) == graphs[t1 - 1].get(i, j) {
                    continue;
                }
                for t in t1.saturating_sub(lookback)..t1 {
                    out.push(InverseSample {
                        si: inputs[t][i].clone(),
                        sj: inputs[t][j].clone(),
                        activate: graphs[t1].get(i, j),
                        gi: goals[t1][i].clone(),
                        gj: goals[t1][j].clone(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            batch: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Regressor `(s_i, s_j, activate) -> (g_i, g_j)` in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    pub net: DenseNet,
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
    pub trained: bool,
}

impl Parameters for InverseModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.net.visit(&join(prefix, "net"), f);
        f(&join(prefix, "in_mean"), &[self.in_mean.len()], &self.in_mean);
        f(&join(prefix, "in_std"), &[self.in_std.len()], &self.in_std);
        f(&join(prefix, "out_mean"), &[self.out_mean.len()], &self.out_mean);
        f(&join(prefix, "out_std"), &[self.out_std.len()], &self.out_std);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.net.visit_mut(&join(prefix, "net"), f);
        let (a, b, c, d) = (self.in_mean.len(), self.in_std.len(), self.out_mean.len(), self.out_std.len());
        f(&join(prefix, "in_mean"), &[a], &mut self.in_mean);
        f(&join(prefix, "in_std"), &[b], &mut self.in_std);
        f(&join(prefix, "out_mean"), &[c], &mut self.out_mean);
        f(&join(prefix, "out_std"), &[d], &mut self.out_std);
    }
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..k).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let std = (0..k)
        .map(|c| {
            let v = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
            if v > 1e-16 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl InverseModel {
    /// Untrained model of the given shape; `predict` rejects it.
    pub fn untrained(feature_dim: usize, goal_dim: usize, hidden: usize) -> Self {
        let nin = 2 * feature_dim + 1;
        Self {
            net: DenseNet::zeros(&[nin, hidden, 2 * goal_dim], Activation::Silu),
            in_mean: vec![0.0; nin],
            in_std: vec![1.0; nin],
            out_mean: vec![0.0; 2 * goal_dim],
            out_std: vec![1.0; 2 * goal_dim],
            trained: false,
        }
    }

    fn raw_input(si: &[f64], sj: &[f64], activate: bool) -> Vec<f64> {
        let mut x = si.to_vec();
        x.extend_from_slice(sj);
        x.push(if activate { 1.0 } else { 0.0 });
        x
    }

    fn input(&self, si: &[f64], sj: &[f64], activate: bool) -> Vec<f64> {
        Self::raw_input(si, sj, activate)
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.in_mean[k]) / self.in_std[k])
            .collect()
    }

    pub fn fit(samples: &[InverseSample], cfg: &InverseConfig) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| PolicyError::InvalidArgument("inverse model needs contact events".into()))?;
        let (fd, gd) = (first.si.len(), first.gi.len());
        if samples.iter().any(|s| s.si.len() != fd || s.sj.len() != fd || s.gi.len() != gd || s.gj.len() != gd) {
            return Err(PolicyError::InvalidArgument("contact events have inconsistent widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let raw_in: Vec<Vec<f64>> = samples.iter().map(|s| Self::raw_input(&s.si, &s.sj, s.activate)).collect();
        let raw_out: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let mut y = s.gi.clone();
                y.extend_from_slice(&s.gj);
                y
            })
            .collect();
        let (in_mean, in_std) = column_stats(&raw_in);
        let (out_mean, out_std) = column_stats(&raw_out);
        let mut model = Self {
            net: DenseNet::new(&[2 * fd + 1, cfg.hidden, 2 * gd], Activation::Silu, &mut rng),
            in_mean,
            in_std,
            out_mean,
            out_std,
            trained: true,
        };
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| model.input(&s.si, &s.sj, s.activate)).collect();
        let ys: Vec<Vec<f64>> = raw_out
            .iter()
            .map(|y| y.iter().enumerate().map(|(k, v)| (v - model.out_mean[k]) / model.out_std[k]).collect())
            .collect();
        let mut adam = AdamState::for_params(&model.net, cfg.lr);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch.max(1)) {
                let mut g = zeros_like(&model.net);
                let scale = 2.0 / batch.len() as f64;
                for &k in batch {
                    let (out, cache) = model.net.forward_cached(&xs[k]);
                    let dout: Vec<f64> = out.iter().zip(&ys[k]).map(|(a, b)| scale * (a - b)).collect();
                    model.net.backward(&cache, &dout, &mut g);
                }
                let mut theta = flatten(&model.net);
                adam.step(&mut theta, &flatten(&g))?;
                unflatten(&mut model.net, &theta)?;
            }
        }
        Ok(model)
    }

    /// Goal features `(g_i, g_j)` in original units.
    pub fn predict(&self, si: &[f64], sj: &[f64], activate: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.trained {
            return Err(PolicyError::Untrained("learned inverse target model"));
        }
        let z = self.net.try_forward(&self.input(si, sj, activate))?;
        let y: Vec<f64> = z.iter().enumerate().map(|(k, v)| v * self.out_std[k] + self.out_mean[k]).collect();
        let gd = y.len() / 2;
        Ok((y[..gd].to_vec(), y[gd..].to_vec()))
    }
}

/// Where goal states come from.
#[derive(Debug, Clone, Copy)]
pub enum TargetSource<'a> {
    /// True simulator state; evaluation only.
    Geometric(&'a WorldState),
    /// Learned inverse over per-object inputs, with the current graph and
    /// current goal-space features.
    Learned {
        model: &'a InverseModel,
        inputs: &'a [Vec<f64>],
        features: &'a [Vec<f64>],
        graph: &'a InteractionGraph,
    },
}

pub fn infer_target_states(source: TargetSource<'_>, subgoal: &SubgoalGraph) -> Result<GoalStates> {
    match source {
        TargetSource::Geometric(state) => geometric_targets(state, subgoal),
        TargetSource::Learned { model, inputs, features, graph } => {
            let (i, j) = (subgoal.anchor, subgoal.target);
            let n = features.len();
            if i.max(j) >= n || inputs.len() != n {
                return Err(PolicyError::InvalidArgument(format!("subgoal ({i}, {j}) out of range for {n} objects")));
            }
            if !model.trained {
                return Err(PolicyError::Untrained("learned inverse target model"));
            }
            if subgoal.satisfied(graph) {
                return Ok(GoalStates::pair(n, i, features[i].clone(), j, features[j].clone()));
            }
            let (gi, gj) = model.predict(&inputs[i], &inputs[j], subgoal.activate)?;
            Ok(GoalStates::pair(n, i, gi, j, gj))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fioc_env::ObjectState;

    fn obj(x: f64, y: f64, r: f64) -> ObjectState {
        ObjectState { pos: [x, y], vel: [0.0; 2], mass: 1.0, radius: r, type_id: 0 }
    }

    #[test]
    fn geometric_goal_closes_to_contact_distance() {
        let st = WorldState { objects: vec![obj(0.7, 0.5, 0.05), obj(0.3, 0.5, 0.05)], step: 0 };
        let sg = SubgoalGraph::new(0, 1, true).unwrap();
        let g = geometric_targets(&st, &sg).unwrap();
        let gi = g.targets[0].as_ref().unwrap();
        let gj = g.targets[1].as_ref().unwrap();
        assert!((gi[0] - gj[0] - 0.1).abs() < 1e-12);
        assert!((gi[1] - gj[1]).abs() < 1e-12);
        assert_eq!(gj, &vec![0.3, 0.5]);
    }

    #[test]
    fn satisfied_subgoal_keeps_current_states() {
        let st = WorldState { objects: vec![obj(0.5, 0.5, 0.05), obj(0.58, 0.5, 0.05), obj(0.1, 0.1, 0.05)], step: 0 };
        let sg = SubgoalGraph::new(0, 1, true).unwrap();
        let g = geometric_targets(&st, &sg).unwrap();
        assert_eq!(g.targets[0], Some(vec![0.5, 0.5]));
        assert_eq!(g.targets[1], Some(vec![0.58, 0.5]));
        assert_eq!(g.targets[2], None);
        assert_eq!(g.mse(&[vec![0.5, 0.5], vec![0.58, 0.5], vec![9.0, 9.0]]), 0.0);
    }

    #[test]
    fn release_goal_moves_apart() {
        let st = WorldState { objects: vec![obj(0.5, 0.5, 0.05), obj(0.5, 0.58, 0.05)], step: 0 };
        let sg = SubgoalGraph::new(0, 1, false).unwrap();
        let g = geometric_targets(&st, &sg).unwrap();
        let gi = g.targets[0].as_ref().unwrap();
        assert!((0.58 - gi[1] - RELEASE_FACTOR * 0.1).abs() < 1e-12);
    }

    #[test]
    fn untrained_inverse_rejected() {
        let m = InverseModel::untrained(3, 2, 4);
        assert!(matches!(m.predict(&[0.0; 3], &[0.0; 3], true), Err(PolicyError::Untrained(_))));
        let sg = SubgoalGraph::new(0, 1, true).unwrap();
        let g = InteractionGraph::empty(2);
        let f = vec![vec![0.0; 2]; 2];
        let src = TargetSource::Learned { model: &m, inputs: &[vec![0.0; 3], vec![0.0; 3]], features: &f, graph: &g };
        assert!(infer_target_states(src, &sg).is_err());
    }

    #[test]
    fn contact_events_pick_onsets_and_releases() {
        let e = InteractionGraph::empty(2);
        let mut on = e.clone();
        on.set_pair(0, 1, true);
        let graphs = vec![e.clone(), e.clone(), on.clone(), on, e];
        let inputs: Vec<Vec<Vec<f64>>> = (0..5).map(|t| vec![vec![t as f64], vec![10.0 + t as f64]]).collect();
        let ev = contact_events(&inputs, &inputs, &graphs, 2);
        // onset at t=2 and release at t=4, both ordered pairs, two lookback steps each
        assert_eq!(ev.len(), 8);
        assert_eq!(ev.iter().filter(|s| s.activate).count(), 4);
        let first = &ev[0];
        assert_eq!((first.si[0], first.sj[0], first.gi[0]), (0.0, 10.0, 2.0));
    }
}
