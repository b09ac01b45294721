//! Receding-horizon CEM over action sequences.

use fioc_numkit::{cem_optimize_with, CemConfig, CemOptions, NumError};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::targets::GoalStates;
use crate::{PolicyError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub horizon: usize,
    pub init_std: f64,
    /// Per-step action norm bound.
    pub action_bound: f64,
    /// Step size of the finite-difference refinement; `None` disables it.
    pub refine_rate: Option<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            iterations: 6,
            horizon: 8,
            init_std: 1.0,
            action_bound: 2.0,
            refine_rate: Some(5e-5),
        }
    }
}

impl MpcConfig {
    pub fn cem(&self) -> CemConfig {
        CemConfig {
            population: self.population,
            elites: self.elites,
            iterations: self.iterations,
            horizon: self.horizon,
            init_std: self.init_std,
            refine_rate: self.refine_rate,
            min_std: 1e-3,
        }
    }
}

/// Scale each 2-D step of `plan` back inside the norm ball.
pub fn project_plan(plan: &mut [f64], bound: f64) {
    for a in plan.chunks_mut(2) {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > bound {
            a.iter_mut().for_each(|v| *v *= bound / norm);
        }
    }
}

/// Roll `plan` through `dynamics` from `state` and return the final state.
pub fn roll<D: Dynamics>(dynamics: &D, state: &D::State, plan: &[f64]) -> D::State {
    let mut s = state.clone();
    for a in plan.chunks(2) {
        s = dynamics.step(&s, [a[0], a[1]]);
    }
    s
}

/// Plan an action sequence minimizing `cost` of the final rolled-out state.
/// The zero plan and `warm` (if given) join the first population. Returns
/// the plan as `horizon` actions.
pub fn mpc_plan<D, C, R>(
    state: &D::State,
    cost: C,
    dynamics: &D,
    cfg: &MpcConfig,
    warm: Option<&[f64]>,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>>
where
    D: Dynamics,
    C: Fn(&D::State) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if cfg.horizon == 0 {
        return Err(PolicyError::InvalidArgument("mpc horizon must be >= 1".into()));
    }
    if !(cfg.action_bound > 0.0) {
        return Err(PolicyError::InvalidArgument("mpc action_bound must be positive".into()));
    }
    let dim = 2 * cfg.horizon;
    let bound = cfg.action_bound;
    let project = move |p: &mut [f64]| project_plan(p, bound);
    let mut injected = vec![vec![0.0; dim]];
    let mut init_mean = vec![0.0; dim];
    if let Some(w) = warm.filter(|w| w.len() == dim) {
        injected.push(w.to_vec());
        init_mean = w.to_vec();
    }
    let objective = |plan: &[f64]| {
        let v = cost(&roll(dynamics, state, plan));
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };
    let out = cem_optimize_with(
        objective,
        CemOptions {
            init_mean,
            injected,
            project: Some(&project),
        },
        &cfg.cem(),
        rng,
    )
    .map_err(|e| match e {
        NumError::NonFinite(m) => PolicyError::Planning(m),
        other => PolicyError::Num(other),
    })?;
    Ok(out.best.chunks(2).map(|a| [a[0], a[1]]).collect())
}

/// Plan toward `goals`, scored by goal MSE on the final step's features.
pub fn mpc_act<D: Dynamics, R: Rng + ?Sized>(
    state: &D::State,
    goals: &GoalStates,
    dynamics: &D,
    cfg: &MpcConfig,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    mpc_plan(state, |s: &D::State| goals.mse(&dynamics.features(s)), dynamics, cfg, None, rng)
}
