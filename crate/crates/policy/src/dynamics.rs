//! Dynamics handles that MPC can roll forward.

use fioc_env::{Env, InteractionGraph, WorldState};
use fioc_model::{GraphSource, SoftGraph, WorldModel};

pub trait Dynamics: Sync {
    type State: Clone + Send + Sync;

    fn step(&self, state: &Self::State, action: [f64; 2]) -> Self::State;

    /// Per-object vectors that goal states are compared against.
    fn features(&self, state: &Self::State) -> Vec<Vec<f64>>;
}

/// Noise-free simulator; features are positions.
#[derive(Debug, Clone)]
pub struct OracleDynamics {
    pub env: Env,
}

impl Dynamics for OracleDynamics {
    type State = WorldState;

    fn step(&self, state: &WorldState, action: [f64; 2]) -> WorldState {
        self.env.predict(state, action)
    }

    fn features(&self, state: &WorldState) -> Vec<Vec<f64>> {
        state.objects.iter().map(|o| o.pos.to_vec()).collect()
    }
}

/// Prior rollouts of a trained world model over latents `s`; features are
/// the dynamic parts `d`.
#[derive(Debug, Clone)]
pub struct LearnedDynamics {
    pub model: WorldModel,
    pub source: GraphSource,
}

impl LearnedDynamics {
    fn graph(&self, s: &[Vec<f64>]) -> SoftGraph {
        let n = s.len();
        match self.source {
            GraphSource::Full => SoftGraph::full(n),
            GraphSource::Empty | GraphSource::GroundTruth => SoftGraph::empty(n),
            GraphSource::Inferred => self
                .model
                .infer_graph(s)
                .map(|g| g.soft)
                .unwrap_or_else(|_| SoftGraph::empty(n)),
        }
    }

    /// Hardened graph the model infers for latents `s`.
    pub fn hard_graph(&self, s: &[Vec<f64>]) -> InteractionGraph {
        self.graph(s).harden()
    }
}

impl Dynamics for LearnedDynamics {
    type State = Vec<Vec<f64>>;

    fn step(&self, s: &Vec<Vec<f64>>, action: [f64; 2]) -> Vec<Vec<f64>> {
        let (c, d): (Vec<_>, Vec<_>) = s.iter().map(|v| self.model.factor(v)).unzip();
        let g = self.graph(s);
        self.model.prior_step(s, &c, &d, &action, &g)
    }

    fn features(&self, s: &Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        s.iter().map(|v| self.model.factor(v).1).collect()
    }
}
