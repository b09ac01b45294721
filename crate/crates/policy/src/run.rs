//! Episode loop of the two-level controller and on-policy training of the
//! subgoal selector.

use fioc_env::{ground_truth_graph, Env, InteractionGraph, TaskSpec, TaskTracker, WorldState};
use fioc_model::{Carry, WorldModel};
use fioc_numkit::AdamState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, LearnedDynamics, OracleDynamics};
use crate::high_level::{high_level_select, num_pairs, policy_input, HighLevelPolicy};
use crate::low_level::{pg_input, LowLevelMode, PgConfig, PgPolicy};
use crate::mpc::{mpc_plan, MpcConfig};
use crate::ppo::{ppo_update, HlStep, PpoConfig, PpoStats, RolloutBuffer};
use crate::subgoal::{diversity_reward, SubgoalGraph, VisitedSet};
use crate::targets::{geometric_targets, infer_target_states, GoalStates, InverseModel, TargetSource};
use crate::{PolicyError, Result};

/// Low-level side of a controller: what it believes, and how it acts.
pub trait Controller {
    fn reset(&mut self, state: &WorldState, obs: &[Vec<f64>]) -> Result<()>;
    fn observe(&mut self, state: &WorldState, obs: &[Vec<f64>]) -> Result<()>;
    /// Per-object summary fed to the subgoal policy.
    fn summary(&self) -> Vec<Vec<f64>>;
    /// Hardened current graph as the controller sees it.
    fn graph(&self, truth: &InteractionGraph) -> InteractionGraph;
    /// Goal states for `subgoal` and the current features they compare to.
    fn goals(&self, subgoal: &SubgoalGraph) -> Result<(GoalStates, Vec<Vec<f64>>)>;
    /// Called when a new subgoal starts.
    fn new_subgoal(&mut self);
    fn act(&mut self, subgoal: &SubgoalGraph, rng: &mut ChaCha8Rng) -> Result<[f64; 2]>;
}

/// Shared low-level machinery: MPC with a shifted warm start, or a
/// Gaussian policy.
#[derive(Debug, Clone)]
pub struct LowLevel {
    pub mode: LowLevelMode,
    pub mpc: MpcConfig,
    pub pg: Option<PgPolicy>,
    /// Deterministic policy actions.
    pub greedy: bool,
    warm: Option<Vec<f64>>,
}

impl LowLevel {
    pub fn mpc(mpc: MpcConfig) -> Self {
        Self {
            mode: LowLevelMode::Mpc,
            mpc,
            pg: None,
            greedy: true,
            warm: None,
        }
    }

    pub fn with_policy(mut self, pg: PgPolicy) -> Self {
        self.mode = LowLevelMode::PolicyGradient;
        self.pg = Some(pg);
        self
    }

    fn act<D: Dynamics, C: Fn(&D::State) -> f64 + Sync>(
        &mut self,
        dynamics: &D,
        state: &D::State,
        cost: C,
        goals: &GoalStates,
        features: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Result<[f64; 2]> {
        match self.mode {
            LowLevelMode::Mpc => {
                let plan = mpc_plan(state, cost, dynamics, &self.mpc, self.warm.as_deref(), rng)?;
                let mut next: Vec<f64> = plan.iter().skip(1).flat_map(|a| a.iter().copied()).collect();
                next.extend([0.0, 0.0]);
                self.warm = Some(next);
                Ok(plan[0])
            }
            LowLevelMode::PolicyGradient => {
                let pg = self.pg.as_ref().ok_or(PolicyError::Untrained("low-level policy"))?;
                pg.act(&pg_input(features, goals), self.greedy, rng)
            }
        }
    }
}

fn unit(d: [f64; 2]) -> [f64; 2] {
    let n = d[0].hypot(d[1]);
    if n > 0.0 {
        [d[0] / n, d[1] / n]
    } else {
        [1.0, 0.0]
    }
}

/// Cost of `state` for `subgoal` with goals recomputed on that state: the
/// pair's gap to contact distance (or to the release separation), plus,
/// when neither object is the agent, the agent's distance to the point
/// behind the anchor from which it pushes toward the target.
pub fn geometric_cost(state: &WorldState, subgoal: &SubgoalGraph) -> f64 {
    let (i, j) = (subgoal.anchor, subgoal.target);
    let (a, b) = (&state.objects[i], &state.objects[j]);
    let reach = a.radius + b.radius;
    let dist = a.distance(b);
    if !subgoal.activate {
        return (crate::targets::RELEASE_FACTOR * reach - dist).max(0.0).powi(2);
    }
    let mut cost = (dist - reach).max(0.0).powi(2);
    if i != WorldState::AGENT && j != WorldState::AGENT {
        let agent = state.agent();
        let dir = unit([b.pos[0] - a.pos[0], b.pos[1] - a.pos[1]]);
        let r = agent.radius + a.radius;
        let push = [a.pos[0] - r * dir[0], a.pos[1] - r * dir[1]];
        cost += (agent.pos[0] - push[0]).powi(2) + (agent.pos[1] - push[1]).powi(2);
    }
    cost
}

/// Plans on the noise-free simulator with geometric goals. Evaluation
/// upper bound; it reads the true state.
#[derive(Debug, Clone)]
pub struct OracleController {
    pub dynamics: OracleDynamics,
    pub low: LowLevel,
    state: Option<WorldState>,
}

impl OracleController {
    pub fn new(env: Env, low: LowLevel) -> Self {
        Self {
            dynamics: OracleDynamics { env },
            low,
            state: None,
        }
    }

    fn state(&self) -> Result<&WorldState> {
        self.state
            .as_ref()
            .ok_or_else(|| PolicyError::InvalidArgument("controller used before reset".into()))
    }
}

impl Controller for OracleController {
    fn reset(&mut self, state: &WorldState, _obs: &[Vec<f64>]) -> Result<()> {
        self.state = Some(state.clone());
        self.low.warm = None;
        Ok(())
    }

    fn observe(&mut self, state: &WorldState, _obs: &[Vec<f64>]) -> Result<()> {
        self.state = Some(state.clone());
        Ok(())
    }

    fn summary(&self) -> Vec<Vec<f64>> {
        self.state
            .as_ref()
            .map(|s| s.objects.iter().map(|o| vec![o.pos[0], o.pos[1], o.vel[0], o.vel[1]]).collect())
            .unwrap_or_default()
    }

    fn graph(&self, truth: &InteractionGraph) -> InteractionGraph {
        truth.clone()
    }

    fn goals(&self, subgoal: &SubgoalGraph) -> Result<(GoalStates, Vec<Vec<f64>>)> {
        let s = self.state()?;
        Ok((geometric_targets(s, subgoal)?, self.dynamics.features(s)))
    }

    fn new_subgoal(&mut self) {
        self.low.warm = None;
    }

    fn act(&mut self, subgoal: &SubgoalGraph, rng: &mut ChaCha8Rng) -> Result<[f64; 2]> {
        let state = self.state()?.clone();
        let (goals, features) = self.goals(subgoal)?;
        let sg = *subgoal;
        self.low
            .act(&self.dynamics, &state, move |s: &WorldState| geometric_cost(s, &sg), &goals, &features, rng)
    }
}

/// Plans in the latent space of a trained world model with goals from a
/// learned inverse model. Sees observations only.
#[derive(Debug, Clone)]
pub struct LearnedController {
    pub dynamics: LearnedDynamics,
    pub inverse: InverseModel,
    pub low: LowLevel,
    carry: Option<Carry>,
    s: Vec<Vec<f64>>,
}

impl LearnedController {
    pub fn new(dynamics: LearnedDynamics, inverse: InverseModel, low: LowLevel) -> Self {
        Self {
            dynamics,
            inverse,
            low,
            carry: None,
            s: Vec::new(),
        }
    }

    fn model(&self) -> &WorldModel {
        &self.dynamics.model
    }

    fn encode(&mut self, obs: &[Vec<f64>]) -> Result<()> {
        let carry = match self.carry.take() {
            Some(c) => c,
            None => {
                let cfg = &self.model().config;
                Carry::zeros(obs.len(), cfg.s_dim(), cfg.gru_hidden)
            }
        };
        let e = self.model().encode_mean(obs, &carry)?;
        self.s = e.s;
        self.carry = Some(e.carry);
        Ok(())
    }
}

impl Controller for LearnedController {
    fn reset(&mut self, _state: &WorldState, obs: &[Vec<f64>]) -> Result<()> {
        self.carry = None;
        self.low.warm = None;
        self.encode(obs)
    }

    fn observe(&mut self, _state: &WorldState, obs: &[Vec<f64>]) -> Result<()> {
        self.encode(obs)
    }

    fn summary(&self) -> Vec<Vec<f64>> {
        self.dynamics.features(&self.s)
    }

    fn graph(&self, _truth: &InteractionGraph) -> InteractionGraph {
        self.dynamics.hard_graph(&self.s)
    }

    /// Inverse-model goals for the pair; when neither object is the agent,
    /// the agent also gets the goal of touching the anchor.
    fn goals(&self, subgoal: &SubgoalGraph) -> Result<(GoalStates, Vec<Vec<f64>>)> {
        let features = self.dynamics.features(&self.s);
        let graph = self.dynamics.hard_graph(&self.s);
        let source = TargetSource::Learned {
            model: &self.inverse,
            inputs: &self.s,
            features: &features,
            graph: &graph,
        };
        let mut goals = infer_target_states(source, subgoal)?;
        let (i, j) = (subgoal.anchor, subgoal.target);
        let agent = WorldState::AGENT;
        if subgoal.activate && i != agent && j != agent && !subgoal.satisfied(&graph) {
            let (g0, _) = self.inverse.predict(&self.s[agent], &self.s[i], true)?;
            goals.targets[agent] = Some(g0);
        }
        Ok((goals, features))
    }

    fn new_subgoal(&mut self) {
        self.low.warm = None;
    }

    fn act(&mut self, subgoal: &SubgoalGraph, rng: &mut ChaCha8Rng) -> Result<[f64; 2]> {
        let (goals, features) = self.goals(subgoal)?;
        let s = self.s.clone();
        let dynamics = &self.dynamics;
        let cost = |st: &Vec<Vec<f64>>| goals.mse(&dynamics.features(st));
        self.low.act(dynamics, &s, cost, &goals, &features, rng)
    }
}

/// Where subgoals come from.
#[derive(Debug, Clone, Copy)]
pub enum HighLevelMode<'a> {
    /// The task's next required edge.
    TaskOracle,
    Learned { policy: &'a HighLevelPolicy, greedy: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Low-level steps per subgoal.
    pub k: usize,
    pub max_steps: usize,
    pub lambda_div: f64,
    /// Episodes per training batch; the visited set resets between batches.
    pub batch_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 25,
            max_steps: 100,
            lambda_div: 0.5,
            batch_episodes: 16,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_steps == 0 || self.batch_episodes == 0 {
            return Err(PolicyError::InvalidArgument(
                "k, max_steps and batch_episodes must be >= 1".into(),
            ));
        }
        if !(self.lambda_div >= 0.0 && self.lambda_div.is_finite()) {
            return Err(PolicyError::InvalidArgument("lambda_div must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One subgoal of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub anchor: usize,
    pub target: usize,
    pub activate: bool,
    /// Edges of the controller's graph when the subgoal was chosen.
    pub graph_before: Vec<(usize, usize)>,
    pub achieved: bool,
    pub steps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub subgoals_used: usize,
    pub unique_graphs_visited: usize,
    pub trace: Vec<TraceEntry>,
}

struct EpisodeOutput {
    result: EpisodeResult,
    decisions: Vec<HlStep>,
}

fn next_required(tracker: &TaskTracker) -> Result<SubgoalGraph> {
    let edges = tracker.spec.required_edges();
    let (i, j) = edges[tracker.phase.min(edges.len() - 1)];
    SubgoalGraph::new(i, j, true)
}

/// Core loop. Graphs enter `visited` from the simulator when
/// `truth_graphs`, otherwise from the controller.
fn run_episode<C: Controller>(
    env: &Env,
    task: TaskSpec,
    ctrl: &mut C,
    high: HighLevelMode<'_>,
    cfg: &RunConfig,
    seed: u64,
    visited: &mut VisitedSet,
    truth_graphs: bool,
    initial: Option<WorldState>,
) -> Result<EpisodeOutput> {
    cfg.validate()?;
    task.validate(env.config.n_objects)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = match initial {
        Some(s) if s.n() == env.config.n_objects => s,
        Some(s) => {
            return Err(PolicyError::InvalidArgument(format!(
                "initial state has {} objects, env has {}",
                s.n(),
                env.config.n_objects
            )))
        }
        None => env.reset(&mut rng)?,
    };
    let obs = env.observe(&state, &mut rng);
    ctrl.reset(&state, &obs)?;
    let mut tracker = TaskTracker::new(task);
    let mut episode_graphs = VisitedSet::new();
    let mut truth = ground_truth_graph(&state);
    tracker.reward(&state, &truth);
    let seen = |c: &C, truth: &InteractionGraph| if truth_graphs { truth.clone() } else { c.graph(truth) };
    let g0 = seen(ctrl, &truth);
    visited.insert(&g0);
    episode_graphs.insert(&g0);

    let n = env.config.n_objects;
    let mask = vec![true; num_pairs(n)];
    let mut steps = 0;
    let mut trace = Vec::new();
    let mut decisions = Vec::new();
    while steps < cfg.max_steps && !tracker.success() {
        let current = ctrl.graph(&truth);
        let (subgoal, decision) = match high {
            HighLevelMode::TaskOracle => (next_required(&tracker)?, None),
            HighLevelMode::Learned { policy, greedy } => {
                let input = policy_input(&ctrl.summary(), &current);
                let sel = high_level_select(policy, &input, &current, &mask, greedy, &mut rng)?;
                let step = HlStep {
                    input,
                    mask: mask.clone(),
                    pair: sel.pair,
                    log_prob: sel.log_prob,
                    value: sel.value,
                    reward: 0.0,
                    done: false,
                };
                (sel.subgoal, Some(step))
            }
        };
        ctrl.new_subgoal();
        let phase_before = tracker.phase;
        let start = steps;
        let mut reached = Vec::new();
        let mut achieved = false;
        while steps - start < cfg.k && steps < cfg.max_steps && !tracker.success() {
            let action = ctrl.act(&subgoal, &mut rng)?;
            let out = env.step(&state, action, &mut tracker, &mut rng);
            state = out.state;
            steps += 1;
            ctrl.observe(&state, &out.obs)?;
            truth = ground_truth_graph(&state);
            tracker.reward(&state, &truth);
            let g = seen(ctrl, &truth);
            visited.insert(&g);
            episode_graphs.insert(&g);
            if !reached.contains(&g) {
                reached.push(g);
            }
            if subgoal.satisfied(&ctrl.graph(&truth)) {
                achieved = true;
                break;
            }
        }
        trace.push(TraceEntry {
            step: start,
            anchor: subgoal.anchor,
            target: subgoal.target,
            activate: subgoal.activate,
            graph_before: current.edges().collect(),
            achieved,
            steps_used: steps - start,
        });
        if let Some(mut d) = decision {
            let r_task = (tracker.phase - phase_before) as f64;
            let r_div: f64 = reached.iter().map(|g| diversity_reward(visited.visits(g))).sum();
            d.reward = r_task + cfg.lambda_div * r_div;
            decisions.push(d);
        }
    }
    if let Some(last) = decisions.last_mut() {
        last.done = true;
    }
    Ok(EpisodeOutput {
        result: EpisodeResult {
            seed,
            success: tracker.success(),
            steps,
            subgoals_used: trace.len(),
            unique_graphs_visited: episode_graphs.count(),
            trace,
        },
        decisions,
    })
}

/// Run one evaluation episode from `seed`. Visited graphs are the
/// controller's own view.
pub fn run_task<C: Controller>(
    env: &Env,
    task: TaskSpec,
    ctrl: &mut C,
    high: HighLevelMode<'_>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut visited = VisitedSet::new();
    Ok(run_episode(env, task, ctrl, high, cfg, seed, &mut visited, false, None)?.result)
}

/// [`run_task`] from a given initial state instead of a reset.
pub fn run_task_from<C: Controller>(
    env: &Env,
    task: TaskSpec,
    ctrl: &mut C,
    high: HighLevelMode<'_>,
    cfg: &RunConfig,
    seed: u64,
    initial: WorldState,
) -> Result<EpisodeResult> {
    let mut visited = VisitedSet::new();
    Ok(run_episode(env, task, ctrl, high, cfg, seed, &mut visited, false, Some(initial))?.result)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Distinct simulator graphs visited in each batch.
    pub unique_per_batch: Vec<usize>,
    pub success_per_batch: Vec<f64>,
    pub stats: Vec<PpoStats>,
}

/// PPO on the subgoal policy. Episode seeds come from `seed` alone, so runs
/// that differ only in `lambda_div` see the same initial states.
#[allow(clippy::too_many_arguments)]
pub fn train_high_level<C: Controller>(
    env: &Env,
    task: TaskSpec,
    ctrl: &mut C,
    policy: &mut HighLevelPolicy,
    ppo: &PpoConfig,
    cfg: &RunConfig,
    batches: usize,
    seed: u64,
) -> Result<TrainReport> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut update_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_99d0);
    let mut opt = AdamState::for_params(policy, ppo.lr);
    let mut report = TrainReport::default();
    for _ in 0..batches {
        let mut visited = VisitedSet::new();
        let mut buffer = RolloutBuffer::default();
        let mut successes = 0usize;
        for _ in 0..cfg.batch_episodes {
            let s: u64 = seeds.random();
            let out = run_episode(
                env,
                task,
                ctrl,
                HighLevelMode::Learned { policy, greedy: false },
                cfg,
                s,
                &mut visited,
                true,
                None,
            )?;
            successes += out.result.success as usize;
            buffer.steps.extend(out.decisions);
        }
        report.unique_per_batch.push(visited.count());
        report.success_per_batch.push(successes as f64 / cfg.batch_episodes as f64);
        if !buffer.steps.is_empty() {
            report.stats.push(ppo_update(policy, &buffer, ppo, &mut opt, &mut update_rng)?);
        }
    }
    Ok(report)
}

/// Behavior-cloning data for the low-level policy: MPC actions toward
/// random single-edge subgoals, `subgoals` of them, `k` steps each.
pub fn collect_bc_data<C: Controller>(
    env: &Env,
    ctrl: &mut C,
    subgoals: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<[f64; 2]>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.config.n_objects;
    let mut tracker = TaskTracker::new(env.config.task);
    let (mut inputs, mut actions) = (Vec::new(), Vec::new());
    let mut state = env.reset(&mut rng)?;
    ctrl.reset(&state, &env.observe(&state, &mut rng))?;
    for g in 0..subgoals {
        if g % 4 == 0 {
            state = env.reset(&mut rng)?;
            ctrl.reset(&state, &env.observe(&state, &mut rng))?;
        }
        let j = rng.random_range(1..n);
        let subgoal = SubgoalGraph::new(WorldState::AGENT, j, true)?;
        ctrl.new_subgoal();
        for _ in 0..k {
            let (goals, features) = ctrl.goals(&subgoal)?;
            let a = ctrl.act(&subgoal, &mut rng)?;
            inputs.push(pg_input(&features, &goals));
            actions.push(a);
            let out = env.step(&state, a, &mut tracker, &mut rng);
            state = out.state;
            ctrl.observe(&state, &out.obs)?;
            if subgoal.satisfied(&ground_truth_graph(&state)) {
                break;
            }
        }
    }
    Ok((inputs, actions))
}

/// Fit a fresh low-level policy to MPC behavior.
pub fn pretrain_low_level<C: Controller>(
    env: &Env,
    ctrl: &mut C,
    cfg: &PgConfig,
    subgoals: usize,
    k: usize,
    seed: u64,
) -> Result<PgPolicy> {
    let (inputs, actions) = collect_bc_data(env, ctrl, subgoals, k, seed)?;
    let dim = inputs.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut pg = PgPolicy::new(dim, env.config.action_bound, cfg, &mut rng);
    pg.behavior_clone(&inputs, &actions, cfg, &mut rng)?;
    Ok(pg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fioc_env::{EnvConfig, ObjectState};

    fn oracle(env: &Env) -> OracleController {
        OracleController::new(env.clone(), LowLevel::mpc(MpcConfig { refine_rate: None, ..MpcConfig::default() }))
    }

    fn obj(x: f64, y: f64) -> ObjectState {
        ObjectState { pos: [x, y], vel: [0.0; 2], mass: 1.0, radius: 0.05, type_id: 0 }
    }

    #[test]
    fn geometric_cost_zero_at_contact() {
        let s = WorldState { objects: vec![obj(0.5, 0.5), obj(0.6, 0.5), obj(0.9, 0.9)], step: 0 };
        assert_eq!(geometric_cost(&s, &SubgoalGraph::new(0, 1, true).unwrap()), 0.0);
        assert!(geometric_cost(&s, &SubgoalGraph::new(0, 2, true).unwrap()) > 0.0);
        // push point for (1, 2) lies behind object 1, away from object 2
        let c = geometric_cost(&s, &SubgoalGraph::new(1, 2, true).unwrap());
        assert!(c > 0.0);
        assert_eq!(geometric_cost(&s, &SubgoalGraph::new(0, 2, false).unwrap()), 0.0);
    }

    #[test]
    fn satisfied_task_at_reset_succeeds_immediately() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let mut ctrl = oracle(&env);
        let s = WorldState { objects: vec![obj(0.5, 0.5), obj(0.6, 0.5), obj(0.9, 0.9)], step: 0 };
        let r = run_task_from(&env, TaskSpec::Reach { target: 1 }, &mut ctrl, HighLevelMode::TaskOracle, &RunConfig::default(), 0, s)
            .unwrap();
        assert!(r.success);
        assert_eq!(r.steps, 0);
        assert_eq!(r.subgoals_used, 0);
    }

    #[test]
    fn trace_steps_toggle_one_pair() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let mut ctrl = oracle(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = HighLevelPolicy::new(3, 3 * 4 + 6, 8, &mut rng).unwrap();
        let cfg = RunConfig { k: 5, max_steps: 30, ..RunConfig::default() };
        let r = run_task(
            &env,
            TaskSpec::Reach { target: 1 },
            &mut ctrl,
            HighLevelMode::Learned { policy: &policy, greedy: false },
            &cfg,
            11,
        )
        .unwrap();
        for t in &r.trace {
            let mut before = InteractionGraph::empty(3);
            for &(i, j) in &t.graph_before {
                before.set(i, j, true);
            }
            let sg = SubgoalGraph::new(t.anchor, t.target, t.activate).unwrap();
            let after = sg.apply(&before);
            assert!(before.hamming(&after) <= 2);
            assert_eq!(t.activate, !before.get(t.anchor, t.target));
        }
        assert!(r.steps <= 30);
    }

    #[test]
    fn evaluation_is_seed_deterministic() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let cfg = RunConfig { max_steps: 20, ..RunConfig::default() };
        let a = run_task(&env, TaskSpec::Reach { target: 2 }, &mut oracle(&env), HighLevelMode::TaskOracle, &cfg, 4).unwrap();
        let b = run_task(&env, TaskSpec::Reach { target: 2 }, &mut oracle(&env), HighLevelMode::TaskOracle, &cfg, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_budget() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let cfg = RunConfig { k: 0, ..RunConfig::default() };
        assert!(run_task(&env, TaskSpec::Reach { target: 1 }, &mut oracle(&env), HighLevelMode::TaskOracle, &cfg, 0).is_err());
    }
}
