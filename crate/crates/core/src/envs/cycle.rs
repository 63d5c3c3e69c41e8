use crate::envs::{Action, EnvDynamics};

/// Deterministic cycle of length `k` with actions −1, 0, +1 (indices 0, 1, 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleWorld {
    k: usize,
}

impl CycleWorld {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "cycle length must be positive");
        CycleWorld { k }
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Signed move of an action index.
    pub fn delta(action: Action) -> i64 {
        action.0 as i64 - 1
    }

    pub fn step(&self, position: usize, action: Action) -> usize {
        let k = self.k as i64;
        ((position as i64 + Self::delta(action)).rem_euclid(k)) as usize
    }

    /// Shortest number of moves between two positions.
    pub fn distance(&self, from: usize, to: usize) -> usize {
        let d = from.abs_diff(to);
        d.min(self.k - d)
    }

    pub fn dynamics(&self) -> EnvDynamics {
        let mut dynamics = EnvDynamics::zeros(self.k, 3);
        for s in 0..self.k {
            for a in 0..3 {
                dynamics.set(s, a, self.step(s, Action(a)), 1.0);
            }
        }
        dynamics
    }
}
