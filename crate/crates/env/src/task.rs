use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::InteractionGraph;
use crate::physics::WorldState;
use crate::{EnvError, Result};

/// Built-in tasks. Text form: `reach(j)` or `chain(j,k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TaskSpec {
    /// Touch object `target` with the agent.
    Reach { target: usize },
    /// Touch `first`, then have `first` touch `second`.
    Chain { first: usize, second: usize },
}

impl TaskSpec {
    pub fn validate(&self, n_objects: usize) -> Result<()> {
        let ok = |j: usize| j >= 1 && j < n_objects;
        let valid = match *self {
            TaskSpec::Reach { target } => ok(target),
            TaskSpec::Chain { first, second } => ok(first) && ok(second) && first != second,
        };
        if valid {
            Ok(())
        } else {
            Err(EnvError::Config(format!("task {self} invalid for {n_objects} objects")))
        }
    }

    /// Edges that must fire, in order.
    pub fn required_edges(&self) -> Vec<(usize, usize)> {
        match *self {
            TaskSpec::Reach { target } => vec![(WorldState::AGENT, target)],
            TaskSpec::Chain { first, second } => vec![(WorldState::AGENT, first), (first, second)],
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Reach { target } => write!(f, "reach({target})"),
            TaskSpec::Chain { first, second } => write!(f, "chain({first},{second})"),
        }
    }
}

impl FromStr for TaskSpec {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EnvError::UnknownTask(s.to_string());
        let t = s.trim().to_ascii_lowercase();
        let open = t.find('(').ok_or_else(bad)?;
        let args = t[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|a| a.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (&t[..open], nums.as_slice()) {
            ("reach", [j]) => Ok(TaskSpec::Reach { target: *j }),
            ("chain", [j, k]) => Ok(TaskSpec::Chain { first: *j, second: *k }),
            _ => Err(bad()),
        }
    }
}

impl From<TaskSpec> for String {
    fn from(t: TaskSpec) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TaskSpec {
    type Error = EnvError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Per-episode progress through a task's required edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTracker {
    pub spec: TaskSpec,
    /// Number of required edges achieved so far.
    pub phase: usize,
}

impl TaskTracker {
    pub fn new(spec: TaskSpec) -> Self {
        Self { spec, phase: 0 }
    }

    pub fn success(&self) -> bool {
        self.phase >= self.spec.required_edges().len()
    }

    /// Reward for `state` with contact graph `graph`; advances the phase when
    /// the next required edge is active. Several phases may complete in one
    /// step if their edges are active together.
    pub fn reward(&mut self, state: &WorldState, graph: &InteractionGraph) -> f64 {
        let required = self.spec.required_edges();
        let mut bonus = 0.0;
        while let Some(&(i, j)) = required.get(self.phase) {
            if !graph.get(i, j) {
                break;
            }
            self.phase += 1;
            if matches!(self.spec, TaskSpec::Chain { .. }) {
                bonus += 1.0;
            }
        }
        let (i, j) = required[self.phase.min(required.len() - 1)];
        bonus - state.objects[i].distance(&state.objects[j])
    }
}

/// Reward of `state` under the tracker's task, using the contact graph of `state`.
pub fn task_reward(state: &WorldState, tracker: &mut TaskTracker) -> f64 {
    let g = crate::physics::ground_truth_graph(state);
    tracker.reward(state, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::ObjectState;

    fn state(positions: &[[f64; 2]]) -> WorldState {
        WorldState {
            objects: positions
                .iter()
                .map(|&pos| ObjectState {
                    pos,
                    vel: [0.0; 2],
                    mass: 1.0,
                    radius: 0.05,
                    type_id: 0,
                })
                .collect(),
            step: 0,
        }
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("reach(1)".parse::<TaskSpec>().unwrap(), TaskSpec::Reach { target: 1 });
        assert_eq!(" CHAIN(1, 2) ".parse::<TaskSpec>().unwrap(), TaskSpec::Chain { first: 1, second: 2 });
        assert_eq!(TaskSpec::Chain { first: 2, second: 1 }.to_string(), "chain(2,1)");
        for bad in ["push(1)", "reach", "reach(1,2)", "chain(1)", "reach(x)"] {
            assert!(matches!(bad.parse::<TaskSpec>(), Err(EnvError::UnknownTask(_))), "{bad}");
        }
    }

    #[test]
    fn validation() {
        assert!(TaskSpec::Reach { target: 0 }.validate(3).is_err());
        assert!(TaskSpec::Reach { target: 3 }.validate(3).is_err());
        assert!(TaskSpec::Chain { first: 1, second: 1 }.validate(3).is_err());
        assert!(TaskSpec::Chain { first: 1, second: 2 }.validate(3).is_ok());
    }

    #[test]
    fn reach_on_top_is_zero() {
        let s = state(&[[0.4, 0.4], [0.4, 0.4], [0.9, 0.9]]);
        let mut t = TaskTracker::new(TaskSpec::Reach { target: 1 });
        assert_eq!(task_reward(&s, &mut t), 0.0);
        assert!(t.success());
    }

    #[test]
    fn chain_first_phase_is_negative_distance() {
        let s = state(&[[0.1, 0.1], [0.4, 0.5], [0.9, 0.9]]);
        let mut t = TaskTracker::new(TaskSpec::Chain { first: 1, second: 2 });
        assert_eq!(task_reward(&s, &mut t), -0.5);
        assert_eq!(t.phase, 0);
    }

    #[test]
    fn chain_event_trace() {
        let mut t = TaskTracker::new(TaskSpec::Chain { first: 1, second: 2 });
        // far apart, then agent touches object 1, then object 1 touches 2
        let far = state(&[[0.1, 0.1], [0.5, 0.5], [0.9, 0.5]]);
        let touch01 = state(&[[0.42, 0.5], [0.5, 0.5], [0.9, 0.5]]);
        let touch12 = state(&[[0.1, 0.1], [0.8, 0.5], [0.9, 0.5]]);
        assert!(task_reward(&far, &mut t) < 0.0);
        let r = task_reward(&touch01, &mut t);
        assert_eq!(t.phase, 1);
        assert!((r - (1.0 - 0.4)).abs() < 1e-12, "{r}");
        // bonus not paid twice while the edge stays active
        let r = task_reward(&touch01, &mut t);
        assert!((r + 0.4).abs() < 1e-12);
        assert!(!t.success());
        let r = task_reward(&touch12, &mut t);
        assert!((r - (1.0 - 0.1)).abs() < 1e-12);
        assert!(t.success());
    }

    #[test]
    fn chain_requires_order() {
        let mut t = TaskTracker::new(TaskSpec::Chain { first: 1, second: 2 });
        let touch12 = state(&[[0.1, 0.1], [0.8, 0.5], [0.9, 0.5]]);
        task_reward(&touch12, &mut t);
        assert_eq!(t.phase, 0);
    }

    #[test]
    fn serde_as_string() {
        let s = serde_json::to_string(&TaskSpec::Chain { first: 1, second: 2 }).unwrap();
        assert_eq!(s, "\"chain(1,2)\"");
        assert!(serde_json::from_str::<TaskSpec>("\"fly(1)\"").is_err());
    }
}
