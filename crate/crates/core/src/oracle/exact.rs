use nalgebra::{DMatrix, DVector};

use crate::envs::{Action, DiscreteMaze, EnvDynamics, State};
use crate::error::{FbError, Result};
use crate::model::BackwardMap;
use crate::oracle::{check_rho, successor_measure_exact, value_iteration, ValueSolution};

/// Exact FB representation of a finite MDP in dimension `d = |S|·|A|`.
///
/// `B(s, a)` is the indicator of the pair and `F(·, ·, z)` is the successor
/// density `m^{π_z}` of the policy that is optimal for the reward decoded
/// from `z` via `z_{s,a} = r(s, a) ρ(s, a)`. Then `F(s, a, z)ᵀ z = Q*(s, a)`.
///
/// Value-iteration ties go to the lowest action index, so `F` depends on
/// that convention whenever the decoded reward has several optimal policies.
#[derive(Clone, Debug)]
pub struct ExactFb {
    dynamics: EnvDynamics,
    rho: Vec<f64>,
    gamma: f64,
    /// Environment state index of each local state (identity unless built
    /// from a maze restricted to its open cells).
    cells: Vec<usize>,
    local: Vec<Option<usize>>,
}

impl ExactFb {
    pub fn new(dynamics: EnvDynamics, rho: Vec<f64>, gamma: f64) -> Result<Self> {
        check_rho(&rho, dynamics.num_pairs())?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(FbError::InvalidHyperparams(format!("γ must be in [0, 1), got {gamma}")));
        }
        let n = dynamics.num_states();
        Ok(ExactFb {
            dynamics,
            rho,
            gamma,
            cells: (0..n).collect(),
            local: (0..n).map(Some).collect(),
        })
    }

    /// Uniform ρ over all pairs.
    pub fn uniform(dynamics: EnvDynamics, gamma: f64) -> Result<Self> {
        let n = dynamics.num_pairs();
        Self::new(dynamics, vec![1.0 / n as f64; n], gamma)
    }

    /// Maze restricted to its open cells with uniform ρ over open pairs.
    pub fn for_maze(maze: &DiscreteMaze, gamma: f64) -> Result<Self> {
        let dynamics = maze.dynamics().restrict(maze.open_cells())?;
        let mut fb = Self::uniform(dynamics, gamma)?;
        fb.cells = maze.open_cells().to_vec();
        fb.local = vec![None; maze.num_cells()];
        for (i, &c) in fb.cells.iter().enumerate() {
            fb.local[c] = Some(i);
        }
        Ok(fb)
    }

    pub fn dynamics(&self) -> &EnvDynamics {
        &self.dynamics
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Environment state index of each local state.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn local_state(&self, cell: usize) -> Option<usize> {
        self.local.get(cell).copied().flatten()
    }

    pub fn num_pairs(&self) -> usize {
        self.dynamics.num_pairs()
    }

    /// `z_R = E_ρ[r B]` for a reward table over local pairs.
    pub fn encode_reward(&self, reward: &[f64]) -> Result<Vec<f64>> {
        if reward.len() != self.num_pairs() {
            return Err(FbError::shape(self.num_pairs(), reward.len()));
        }
        Ok(reward.iter().zip(&self.rho).map(|(r, p)| r * p).collect())
    }

    pub fn decode_reward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.num_pairs() {
            return Err(FbError::shape(self.num_pairs(), z.len()));
        }
        Ok(z.iter().zip(&self.rho).map(|(z, p)| z / p).collect())
    }

    /// The policy `π_z`: optimal for the decoded reward.
    pub fn policy(&self, z: &[f64]) -> Result<ValueSolution> {
        value_iteration(&self.dynamics, &self.decode_reward(z)?, self.gamma, 1e-12)
    }

    /// `F(·, ·, z)` as a `|S|·|A| × d` table, together with `π_z`.
    pub fn forward_table(&self, z: &[f64]) -> Result<(DMatrix<f64>, ValueSolution)> {
        let solution = self.policy(z)?;
        let na = self.dynamics.num_actions();
        let measure = successor_measure_exact(&self.dynamics, &solution.tabular_policy(na), self.gamma)?;
        Ok((measure.density(&self.rho)?, solution))
    }

    /// `B` as a table: the identity.
    pub fn backward_table(&self) -> DMatrix<f64> {
        DMatrix::identity(self.num_pairs(), self.num_pairs())
    }

    /// `F(s, a, z)ᵀ z` for every local pair.
    pub fn q_values(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (f, _) = self.forward_table(z)?;
        let q = f * DVector::from_column_slice(z);
        Ok(q.iter().copied().collect())
    }

    /// Greedy actions of `F ᵀ z` per local state, lowest index on ties.
    pub fn greedy(&self, z: &[f64]) -> Result<Vec<usize>> {
        let q = self.q_values(z)?;
        let na = self.dynamics.num_actions();
        Ok(q.chunks(na).map(crate::model::argmax).collect())
    }
}

impl BackwardMap for ExactFb {
    fn dim(&self) -> usize {
        self.num_pairs()
    }

    fn backward(&self, state: &State, action: Action) -> Result<Vec<f64>> {
        let na = self.dynamics.num_actions();
        let local = state
            .cell()
            .and_then(|c| self.local_state(c))
            .ok_or_else(|| FbError::Format(format!("state {state:?} is outside the exact model")))?;
        if action.0 >= na {
            return Err(FbError::shape(format!("action < {na}"), action.0));
        }
        let mut b = vec![0.0; self.num_pairs()];
        b[local * na + action.0] = 1.0;
        Ok(b)
    }
}
