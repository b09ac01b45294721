use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::graph::InteractionGraph;
use crate::observe::Mixing;
use crate::physics::{advance, ObjectState, SelfParams, WorldState};
use crate::task::TaskTracker;
use crate::{EnvError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub obs: Vec<Vec<f64>>,
    pub action: [f64; 2],
    pub reward: f64,
    pub graph: InteractionGraph,
    pub gt_state: Vec<ObjectState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub config: EnvConfig,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_objects(&self) -> usize {
        self.steps.first().map_or(0, |s| s.gt_state.len())
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: WorldState,
    /// Contact graph of the pre-step state.
    pub graph: InteractionGraph,
    /// Observation of the post-step state.
    pub obs: Vec<Vec<f64>>,
    pub reward: f64,
    /// The requested action exceeded the bound and was rescaled.
    pub clipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectionPolicy {
    Random,
    ContactSeeking,
}

impl FromStr for CollectionPolicy {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(Self::Random),
            "contact-seeking" | "scripted-contact-seeking" => Ok(Self::ContactSeeking),
            other => Err(EnvError::UnknownPolicy(other.to_string())),
        }
    }
}

/// Immutable simulator configuration plus its observation map.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: EnvConfig,
    pub mixing: Mixing,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mixing = Mixing::for_config(&config);
        Ok(Self { config, mixing })
    }

    pub fn self_params(&self) -> SelfParams {
        SelfParams {
            dt: self.config.dt,
            drag: self.config.drag,
        }
    }

    /// Random non-overlapping placement; the agent starts at rest.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WorldState> {
        let c = &self.config;
        let mut objects: Vec<ObjectState> = Vec::with_capacity(c.n_objects);
        for i in 0..c.n_objects {
            let mass = c.masses[rng.random_range(0..c.masses.len())];
            let radius = c.radii[rng.random_range(0..c.radii.len())];
            let type_id = c.types[rng.random_range(0..c.types.len())];
            let mut placed = None;
            for _ in 0..10_000 {
                let pos = [rng.random_range(radius..1.0 - radius), rng.random_range(radius..1.0 - radius)];
                let cand = ObjectState { pos, vel: [0.0; 2], mass, radius, type_id };
                if objects.iter().all(|o| !o.touches(&cand)) {
                    placed = Some(cand);
                    break;
                }
            }
            let mut obj = placed.ok_or(EnvError::Placement(c.n_objects))?;
            if i != WorldState::AGENT {
                let speed = rng.random_range(0.0..=c.init_speed);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                obj.vel = [speed * angle.cos(), speed * angle.sin()];
            }
            objects.push(obj);
        }
        Ok(WorldState { objects, step: 0 })
    }

    pub fn observe<R: Rng + ?Sized>(&self, state: &WorldState, rng: &mut R) -> Vec<Vec<f64>> {
        self.mixing.observe(state, self.config.n_types, self.config.obs_noise, rng)
    }

    /// Rescale to the norm bound; reports whether rescaling happened.
    pub fn clip_action(&self, a: [f64; 2]) -> ([f64; 2], bool) {
        let a = [finite_or_zero(a[0]), finite_or_zero(a[1])];
        let norm = a[0].hypot(a[1]);
        let b = self.config.action_bound;
        if norm > b {
            ([a[0] * b / norm, a[1] * b / norm], true)
        } else {
            (a, false)
        }
    }

    /// Deterministic transition with no dynamics noise.
    pub fn predict(&self, state: &WorldState, action: [f64; 2]) -> WorldState {
        let (a, _) = self.clip_action(action);
        advance(state, a, self.self_params(), &vec![[0.0; 2]; state.n()]).0
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &WorldState,
        action: [f64; 2],
        tracker: &mut TaskTracker,
        rng: &mut R,
    ) -> StepOutcome {
        let (a, clipped) = self.clip_action(action);
        let sd = self.config.dyn_noise;
        let noise: Vec<[f64; 2]> = (0..state.n())
            .map(|_| {
                if sd > 0.0 {
                    let e0: f64 = StandardNormal.sample(rng);
                    let e1: f64 = StandardNormal.sample(rng);
                    [sd * e0, sd * e1]
                } else {
                    [0.0; 2]
                }
            })
            .collect();
        let (next, graph) = advance(state, a, self.self_params(), &noise);
        let reward = tracker.reward(state, &graph);
        let obs = self.observe(&next, rng);
        StepOutcome {
            state: next,
            graph,
            obs,
            reward,
            clipped,
        }
    }

    /// One episode of `horizon` records under a collection policy, with its
    /// own rng seeded by `seed`.
    pub fn collect_episode(&self, policy: CollectionPolicy, horizon: usize, seed: u64) -> Result<EpisodeRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.reset(&mut rng)?;
        let mut obs = self.observe(&state, &mut rng);
        let mut tracker = TaskTracker::new(self.config.task);
        let mut seeker = Seeker::new(self.config.n_objects, &mut rng);
        let mut steps = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let action = match policy {
                CollectionPolicy::Random => random_action(self.config.action_bound, &mut rng),
                CollectionPolicy::ContactSeeking => seeker.act(self, &state, &mut rng),
            };
            let out = self.step(&state, action, &mut tracker, &mut rng);
            let (action, _) = self.clip_action(action);
            steps.push(StepRecord {
                obs: std::mem::replace(&mut obs, out.obs),
                action,
                reward: out.reward,
                graph: out.graph,
                gt_state: std::mem::replace(&mut state, out.state).objects,
            });
        }
        Ok(EpisodeRecord {
            seed,
            config: self.config.clone(),
            steps,
        })
    }
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// Uniform in the bounding box, then clipped to the norm bound.
pub fn random_action<R: Rng + ?Sized>(bound: f64, rng: &mut R) -> [f64; 2] {
    let a = [rng.random_range(-bound..=bound), rng.random_range(-bound..=bound)];
    let n = a[0].hypot(a[1]);
    if n > bound {
        [a[0] * bound / n, a[1] * bound / n]
    } else {
        a
    }
}

/// Scripted controller that steers the agent into a chosen object and picks
/// a new one after each contact or after a timeout.
struct Seeker {
    target: usize,
    age: usize,
}

impl Seeker {
    const TIMEOUT: usize = 30;

    fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            target: rng.random_range(1..n),
            age: 0,
        }
    }

    fn act<R: Rng + ?Sized>(&mut self, env: &Env, state: &WorldState, rng: &mut R) -> [f64; 2] {
        let agent = state.agent();
        let target = &state.objects[self.target];
        self.age += 1;
        if agent.touches(target) || self.age > Self::TIMEOUT {
            self.target = rng.random_range(1..state.n());
            self.age = 0;
        }
        let target = &state.objects[self.target];
        let d = [target.pos[0] - agent.pos[0], target.pos[1] - agent.pos[1]];
        let dist = d[0].hypot(d[1]).max(1e-9);
        let desired = [d[0] / dist, d[1] / dist];
        let b = env.config.action_bound;
        let gain = agent.mass / env.config.dt;
        let mut a = [0.0; 2];
        for k in 0..2 {
            let e: f64 = StandardNormal.sample(rng);
            a[k] = gain * (desired[k] - agent.vel[k]) + 0.3 * b * e;
        }
        a
    }
}

/// `episodes` records of length `horizon`. Episode `e` uses seed
/// `config.seed + e`, so the result does not depend on the thread count.
pub fn generate_dataset(
    config: &EnvConfig,
    policy: CollectionPolicy,
    episodes: usize,
    horizon: usize,
) -> Result<Vec<EpisodeRecord>> {
    if episodes == 0 || horizon == 0 {
        return Err(EnvError::Config("episodes and horizon must be >= 1".into()));
    }
    let env = Env::new(config.clone())?;
    (0..episodes)
        .into_par_iter()
        .map(|e| env.collect_episode(policy, horizon, config.seed.wrapping_add(e as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MixingKind;
    use crate::physics::self_transition;
    use crate::task::TaskSpec;

    fn quiet() -> EnvConfig {
        EnvConfig {
            obs_noise: 0.0,
            mixing: MixingKind::Identity,
            ..EnvConfig::default()
        }
    }

    fn obj(pos: [f64; 2], vel: [f64; 2]) -> ObjectState {
        ObjectState { pos, vel, mass: 1.0, radius: 0.05, type_id: 0 }
    }

    #[test]
    fn decoupled_step_matches_self_transition() {
        let env = Env::new(quiet()).unwrap();
        let s = WorldState {
            objects: vec![obj([0.2, 0.2], [0.1, 0.0]), obj([0.5, 0.8], [0.0, -0.3]), obj([0.8, 0.3], [-0.2, 0.1])],
            step: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = TaskTracker::new(TaskSpec::Reach { target: 1 });
        let out = env.step(&s, [0.0; 2], &mut t, &mut rng);
        assert!(out.graph.is_empty());
        for (a, b) in out.state.objects.iter().zip(&s.objects) {
            let (p, v) = self_transition(b, None, env.self_params(), [0.0; 2]);
            assert_eq!(a.pos, p);
            assert_eq!(a.vel, v);
        }
        assert_eq!(out.state.step, 1);
    }

    #[test]
    fn out_of_bound_action_clipped() {
        let env = Env::new(quiet()).unwrap();
        let (a, c) = env.clip_action([3.0, 4.0]);
        assert!(c);
        assert!((a[0].hypot(a[1]) - 2.0).abs() < 1e-12);
        assert_eq!(env.clip_action([0.5, 0.5]), ([0.5, 0.5], false));
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = EnvConfig { seed: 17, ..EnvConfig::default() };
        let d = generate_dataset(&cfg, CollectionPolicy::Random, 3, 50).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|e| e.len() == 50));
        assert_eq!(d.iter().map(|e| e.len()).sum::<usize>(), 150);
        assert_eq!(d[1].seed, 18);
        let again = generate_dataset(&cfg, CollectionPolicy::Random, 3, 50).unwrap();
        let a = serde_json::to_string(&d).unwrap();
        let b = serde_json::to_string(&again).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn records_align_state_and_graph() {
        let cfg = EnvConfig { seed: 3, ..quiet() };
        let d = generate_dataset(&cfg, CollectionPolicy::ContactSeeking, 1, 40).unwrap();
        for s in &d[0].steps {
            let w = WorldState { objects: s.gt_state.clone(), step: 0 };
            assert_eq!(s.graph, crate::physics::ground_truth_graph(&w));
            assert_eq!(s.obs[0], crate::observe::raw_features(&s.gt_state[0], 3));
        }
    }

    #[test]
    fn policy_tags() {
        assert_eq!("random".parse::<CollectionPolicy>().unwrap(), CollectionPolicy::Random);
        assert_eq!(
            "scripted-contact-seeking".parse::<CollectionPolicy>().unwrap(),
            CollectionPolicy::ContactSeeking
        );
        assert!("greedy".parse::<CollectionPolicy>().is_err());
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(generate_dataset(&EnvConfig::default(), CollectionPolicy::Random, 0, 5).is_err());
        assert!(generate_dataset(&EnvConfig::default(), CollectionPolicy::Random, 2, 0).is_err());
    }
}
