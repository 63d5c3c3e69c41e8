use std::f64::consts::PI;

use crate::envs::{Action, CycleWorld};
use crate::model::argmax;

/// Closed-form two-dimensional FB representation of the cycle world:
/// `F(s, a) = (cos, sin)(2π(s + δ_a)/k)`, `B(s) = (cos, sin)(2πs/k)`, so that
/// `F(s, a)ᵀ B(s') = cos(2π(s + δ_a − s')/k)`. `F` does not depend on `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalyticCycleFb {
    world: CycleWorld,
}

impl AnalyticCycleFb {
    pub fn new(k: usize) -> Self {
        assert!(k >= 3, "the analytic construction needs k ≥ 3");
        AnalyticCycleFb { world: CycleWorld::new(k) }
    }

    pub fn k(&self) -> usize {
        self.world.len()
    }

    pub fn world(&self) -> &CycleWorld {
        &self.world
    }

    fn angle(&self, x: i64) -> f64 {
        2.0 * PI * x as f64 / self.k() as f64
    }

    pub fn forward(&self, s: usize, action: Action) -> [f64; 2] {
        let t = self.angle(s as i64 + CycleWorld::delta(action));
        [t.cos(), t.sin()]
    }

    pub fn backward(&self, s: usize) -> [f64; 2] {
        let t = self.angle(s as i64);
        [t.cos(), t.sin()]
    }

    /// `F(s, a)ᵀ z` for all three actions.
    pub fn q_values(&self, s: usize, z: [f64; 2]) -> [f64; 3] {
        let mut q = [0.0; 3];
        for (a, slot) in q.iter_mut().enumerate() {
            let f = self.forward(s, Action(a));
            *slot = f[0] * z[0] + f[1] * z[1];
        }
        q
    }

    /// Greedy action of `π_z` (lowest index on ties).
    pub fn greedy(&self, s: usize, z: [f64; 2]) -> Action {
        Action(argmax(&self.q_values(s, z)))
    }

    /// Follow `π_{B(target)}` from `start` until the target is reached or
    /// `max_steps` moves were made. Returns the visited positions, start
    /// included.
    pub fn rollout(&self, start: usize, target: usize, max_steps: usize) -> Vec<usize> {
        let z = self.backward(target);
        let mut path = vec![start];
        let mut s = start;
        while s != target && path.len() <= max_steps {
            s = self.world.step(s, self.greedy(s, z));
            path.push(s);
        }
        path
    }
}
