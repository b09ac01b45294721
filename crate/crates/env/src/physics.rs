//! Ballistic self-dynamics, wall reflection and elastic contact impulses.

use serde::{Deserialize, Serialize};

use crate::graph::InteractionGraph;
use crate::{EnvError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub mass: f64,
    pub radius: f64,
    #[serde(rename = "type")]
    pub type_id: usize,
}

impl ObjectState {
    pub fn momentum(&self) -> [f64; 2] {
        [self.mass * self.vel[0], self.mass * self.vel[1]]
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * (self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1])
    }

    pub fn distance(&self, other: &ObjectState) -> f64 {
        let dx = other.pos[0] - self.pos[0];
        let dy = other.pos[1] - self.pos[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn touches(&self, other: &ObjectState) -> bool {
        self.distance(other) <= self.radius + other.radius
    }
}

/// Objects in a fixed order; index 0 is the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<ObjectState>,
    pub step: usize,
}

impl WorldState {
    pub const AGENT: usize = 0;

    pub fn n(&self) -> usize {
        self.objects.len()
    }

    pub fn agent(&self) -> &ObjectState {
        &self.objects[Self::AGENT]
    }

    pub fn total_momentum(&self) -> [f64; 2] {
        self.objects.iter().fold([0.0, 0.0], |acc, o| {
            let p = o.momentum();
            [acc[0] + p[0], acc[1] + p[1]]
        })
    }

    pub fn total_kinetic_energy(&self) -> f64 {
        self.objects.iter().map(ObjectState::kinetic_energy).sum()
    }
}

/// Parameters of the per-object update that do not depend on the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfParams {
    pub dt: f64,
    pub drag: f64,
}

/// Mirror `x` into `[0, 1]`; returns the folded coordinate and whether the
/// velocity sign flips.
fn reflect(mut x: f64) -> (f64, bool) {
    let mut flipped = false;
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return (x, flipped);
        }
        flipped = !flipped;
    }
}

/// Self term of the structural transition: drag, action impulse, velocity
/// noise, ballistic move and elastic wall reflection. Returns `(pos, vel)`.
pub fn self_transition(
    obj: &ObjectState,
    action: Option<[f64; 2]>,
    params: SelfParams,
    noise: [f64; 2],
) -> ([f64; 2], [f64; 2]) {
    let a = action.unwrap_or([0.0, 0.0]);
    let mut pos = [0.0; 2];
    let mut vel = [0.0; 2];
    for k in 0..2 {
        let v = (1.0 - params.drag) * obj.vel[k] + a[k] * params.dt / obj.mass + noise[k];
        let (x, flip) = reflect(obj.pos[k] + v * params.dt);
        pos[k] = x;
        vel[k] = if flip { -v } else { v };
    }
    (pos, vel)
}

/// Velocity changes of an elastic collision along the contact normal.
///
/// Only the approaching normal component is exchanged; separating or purely
/// tangential relative motion yields zero impulse.
pub fn interaction_impulse(a: &ObjectState, b: &ObjectState) -> Result<([f64; 2], [f64; 2])> {
    let dist = a.distance(b);
    if dist > a.radius + b.radius {
        return Err(EnvError::NoContact { distance: dist, reach: a.radius + b.radius });
    }
    if dist == 0.0 {
        return Ok(([0.0; 2], [0.0; 2]));
    }
    let n = [(b.pos[0] - a.pos[0]) / dist, (b.pos[1] - a.pos[1]) / dist];
    let approach = (a.vel[0] - b.vel[0]) * n[0] + (a.vel[1] - b.vel[1]) * n[1];
    if approach <= 0.0 {
        return Ok(([0.0; 2], [0.0; 2]));
    }
    let j = 2.0 * a.mass * b.mass / (a.mass + b.mass) * approach;
    let ja = j / a.mass;
    let jb = j / b.mass;
    Ok(([-ja * n[0], -ja * n[1]], [jb * n[0], jb * n[1]]))
}

/// Contact graph: `(i, j)` set iff the discs overlap or touch.
pub fn ground_truth_graph(state: &WorldState) -> InteractionGraph {
    let n = state.n();
    let mut g = InteractionGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if state.objects[i].touches(&state.objects[j]) {
                g.set_pair(i, j, true);
            }
        }
    }
    g
}

/// Sum of contact impulses per object for every active (unordered) edge,
/// all computed from the same pre-step state.
pub fn contact_impulses(state: &WorldState, graph: &InteractionGraph) -> Vec<[f64; 2]> {
    let n = state.n();
    let mut dv = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in i + 1..n {
            if !(graph.get(i, j) || graph.get(j, i)) {
                continue;
            }
            if let Ok((di, dj)) = interaction_impulse(&state.objects[i], &state.objects[j]) {
                for k in 0..2 {
                    dv[i][k] += di[k];
                    dv[j][k] += dj[k];
                }
            }
        }
    }
    dv
}

/// Noiseless-or-noisy physical update: contacts from the pre-step state,
/// impulses summed, then the self term for every object.
pub fn advance(
    state: &WorldState,
    action: [f64; 2],
    params: SelfParams,
    noise: &[[f64; 2]],
) -> (WorldState, InteractionGraph) {
    let graph = ground_truth_graph(state);
    let dv = contact_impulses(state, &graph);
    let objects = state
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let mut kicked = o.clone();
            kicked.vel[0] += dv[i][0];
            kicked.vel[1] += dv[i][1];
            let act = (i == WorldState::AGENT).then_some(action);
            let (pos, vel) = self_transition(&kicked, act, params, noise[i]);
            ObjectState { pos, vel, ..kicked }
        })
        .collect();
    (
        WorldState {
            objects,
            step: state.step + 1,
        },
        graph,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(pos: [f64; 2], vel: [f64; 2], mass: f64, radius: f64) -> ObjectState {
        ObjectState {
            pos,
            vel,
            mass,
            radius,
            type_id: 0,
        }
    }

    const UNIT: SelfParams = SelfParams { dt: 1.0, drag: 0.0 };

    #[test]
    fn ballistic_move() {
        let o = obj([0.5, 0.5], [0.1, 0.0], 1.0, 0.05);
        let (p, v) = self_transition(&o, None, UNIT, [0.0; 2]);
        assert!((p[0] - 0.6).abs() < 1e-15 && p[1] == 0.5);
        assert_eq!(v, [0.1, 0.0]);
    }

    #[test]
    fn wall_reflection_mirrors() {
        let o = obj([0.95, 0.5], [0.1, 0.0], 1.0, 0.05);
        let (p, v) = self_transition(&o, None, UNIT, [0.0; 2]);
        assert!((p[0] - 0.95).abs() < 1e-12);
        assert_eq!(p[1], 0.5);
        assert_eq!(v, [-0.1, 0.0]);
        let o = obj([0.02, 0.5], [-0.05, 0.0], 1.0, 0.05);
        let (p, v) = self_transition(&o, None, UNIT, [0.0; 2]);
        assert!((p[0] - 0.03).abs() < 1e-12);
        assert_eq!(v[0], 0.05);
    }

    #[test]
    fn action_impulse_scales_with_mass() {
        let o = obj([0.5, 0.5], [0.0, 0.0], 2.0, 0.05);
        let (_, v) = self_transition(&o, Some([0.2, 0.0]), UNIT, [0.0; 2]);
        assert!((v[0] - 0.1).abs() < 1e-15 && v[1] == 0.0);
    }

    #[test]
    fn equal_masses_swap_velocities() {
        let a = obj([0.5, 0.5], [1.0, 0.0], 1.0, 0.05);
        let b = obj([0.59, 0.5], [-1.0, 0.0], 1.0, 0.05);
        let (da, db) = interaction_impulse(&a, &b).unwrap();
        assert!((a.vel[0] + da[0] + 1.0).abs() < 1e-12);
        assert!((b.vel[0] + db[0] - 1.0).abs() < 1e-12);
        assert!(da[1].abs() < 1e-15 && db[1].abs() < 1e-15);
    }

    #[test]
    fn unequal_masses_one_dimensional() {
        let a = obj([0.5, 0.5], [1.0, 0.0], 1.0, 0.05);
        let b = obj([0.6, 0.5], [0.0, 0.0], 2.0, 0.05);
        let (da, db) = interaction_impulse(&a, &b).unwrap();
        assert!((a.vel[0] + da[0] + 1.0 / 3.0).abs() < 1e-12);
        assert!((db[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tangential_motion_gives_no_impulse() {
        let a = obj([0.5, 0.5], [0.0, 1.0], 1.0, 0.05);
        let b = obj([0.6, 0.5], [0.0, -1.0], 1.0, 0.05);
        assert_eq!(interaction_impulse(&a, &b).unwrap(), ([0.0; 2], [0.0; 2]));
    }

    #[test]
    fn separated_pair_rejected() {
        let a = obj([0.1, 0.1], [0.0, 0.0], 1.0, 0.05);
        let b = obj([0.5, 0.5], [0.0, 0.0], 1.0, 0.05);
        assert!(interaction_impulse(&a, &b).is_err());
    }

    fn world(objs: Vec<ObjectState>) -> WorldState {
        WorldState { objects: objs, step: 0 }
    }

    #[test]
    fn graph_cases() {
        let far = world(vec![obj([0.1, 0.1], [0.0; 2], 1.0, 0.05), obj([0.5, 0.5], [0.0; 2], 1.0, 0.05)]);
        assert!(ground_truth_graph(&far).is_empty());
        // exactly touching: distance 0.25 == 0.125 + 0.125, all values exact in binary
        let touch = world(vec![obj([0.25, 0.5], [0.0; 2], 1.0, 0.125), obj([0.5, 0.5], [0.0; 2], 1.0, 0.125)]);
        let g = ground_truth_graph(&touch);
        assert!(g.get(0, 1) && g.get(1, 0));
        let chain = world(vec![
            obj([0.2, 0.5], [0.0; 2], 1.0, 0.06),
            obj([0.3, 0.5], [0.0; 2], 1.0, 0.06),
            obj([0.4, 0.5], [0.0; 2], 1.0, 0.06),
        ]);
        let g = ground_truth_graph(&chain);
        assert_eq!(g.edge_count(), 4);
        assert!(!g.get(0, 2));
    }

    #[test]
    fn head_on_step_swaps() {
        let s = world(vec![obj([0.45, 0.5], [1.0, 0.0], 1.0, 0.06), obj([0.55, 0.5], [-1.0, 0.0], 1.0, 0.06)]);
        let p = SelfParams { dt: 0.01, drag: 0.0 };
        let (next, g) = advance(&s, [0.0; 2], p, &[[0.0; 2]; 2]);
        assert!(g.get(0, 1));
        assert!((next.objects[0].vel[0] + 1.0).abs() < 1e-12);
        assert!((next.objects[1].vel[0] - 1.0).abs() < 1e-12);
    }
}
