//! Single-edge subgoals and the visited-graph record behind the diversity
//! bonus.

use std::collections::BTreeMap;

use fioc_env::InteractionGraph;
use serde::{Deserialize, Serialize};

use crate::{PolicyError, Result};

/// Desired state of the contact between `anchor` and `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubgoalGraph {
    pub anchor: usize,
    pub target: usize,
    pub activate: bool,
}

impl SubgoalGraph {
    pub fn new(anchor: usize, target: usize, activate: bool) -> Result<Self> {
        if anchor == target {
            return Err(PolicyError::InvalidArgument(format!("subgoal pair ({anchor}, {target}) is a self edge")));
        }
        Ok(Self { anchor, target, activate })
    }

    /// Toggle the pair relative to `current`.
    pub fn toggle(current: &InteractionGraph, anchor: usize, target: usize) -> Result<Self> {
        if anchor.max(target) >= current.n() {
            return Err(PolicyError::InvalidArgument(format!(
                "subgoal pair ({anchor}, {target}) out of range for {} objects",
                current.n()
            )));
        }
        Self::new(anchor, target, !current.get(anchor, target))
    }

    /// `current` with this pair set to the desired state.
    pub fn apply(&self, current: &InteractionGraph) -> InteractionGraph {
        let mut g = current.clone();
        g.set_pair(self.anchor, self.target, self.activate);
        g
    }

    pub fn satisfied(&self, graph: &InteractionGraph) -> bool {
        graph.get(self.anchor, self.target) == self.activate
    }
}

/// Hardened graphs seen since the last reset, with visit counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisitedSet {
    counts: BTreeMap<Vec<u8>, usize>,
}

impl VisitedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one visit; returns true for a graph not seen before.
    pub fn insert(&mut self, g: &InteractionGraph) -> bool {
        let c = self.counts.entry(g.canonical_bytes()).or_insert(0);
        *c += 1;
        *c == 1
    }

    /// `|G_visited|`
    pub fn count(&self) -> usize {
        self.counts.len()
    }

    pub fn visits(&self, g: &InteractionGraph) -> usize {
        self.counts.get(&g.canonical_bytes()).copied().unwrap_or(0)
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// `1 / sqrt(max(1, count))`
pub fn diversity_reward(count: usize) -> f64 {
    1.0 / (count.max(1) as f64).sqrt()
}

/// Bonus for having induced `g`: the diversity reward at `g`'s own visit
/// count, so rarely visited graphs pay more.
pub fn novelty_reward(visited: &VisitedSet, g: &InteractionGraph) -> f64 {
    diversity_reward(visited.visits(g))
}
