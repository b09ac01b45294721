use serde::{Deserialize, Serialize};

use crate::task::TaskSpec;
use crate::{EnvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    Orthogonal,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_objects: usize,
    pub dt: f64,
    pub drag: f64,
    /// Bound on the Euclidean norm of the agent's action.
    pub action_bound: f64,
    pub obs_noise: f64,
    pub dyn_noise: f64,
    pub masses: Vec<f64>,
    pub radii: Vec<f64>,
    pub types: Vec<usize>,
    pub n_types: usize,
    /// Upper bound on initial speed of non-agent objects.
    pub init_speed: f64,
    pub task: TaskSpec,
    pub mixing: MixingKind,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_objects: 3,
            dt: 0.05,
            drag: 0.0,
            action_bound: 2.0,
            obs_noise: 0.01,
            dyn_noise: 0.0,
            masses: vec![1.0, 2.0, 3.0],
            radii: vec![0.05, 0.07, 0.09],
            types: vec![0, 1, 2],
            n_types: 3,
            init_speed: 1.0,
            task: TaskSpec::Reach { target: 1 },
            mixing: MixingKind::Orthogonal,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Per-object observation length: position, velocity, mass, radius, one-hot type.
    pub fn obs_dim(&self) -> usize {
        6 + self.n_types
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(EnvError::Config(m));
        if self.n_objects < 2 {
            return fail(format!("n_objects must be >= 2, got {}", self.n_objects));
        }
        if !(self.dt > 0.0) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.0..1.0).contains(&self.drag) {
            return fail(format!("drag must be in [0, 1), got {}", self.drag));
        }
        if !(self.action_bound > 0.0) {
            return fail(format!("action_bound must be positive, got {}", self.action_bound));
        }
        if !(self.obs_noise >= 0.0) || !(self.dyn_noise >= 0.0) {
            return fail("noise std must be >= 0".into());
        }
        if !(self.init_speed >= 0.0) {
            return fail("init_speed must be >= 0".into());
        }
        if self.masses.is_empty() || self.masses.iter().any(|m| !(*m > 0.0)) {
            return fail("masses must be a non-empty list of positive values".into());
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && *r < 0.5)) {
            return fail("radii must be a non-empty list of values in (0, 0.5)".into());
        }
        if self.types.is_empty() || self.types.iter().any(|t| *t >= self.n_types) {
            return fail(format!("types must be a non-empty list of ids below n_types={}", self.n_types));
        }
        self.task.validate(self.n_objects)
    }
}
