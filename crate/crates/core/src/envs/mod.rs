//! Reward-free environments and their exact dynamics.

mod continuous;
mod cycle;
mod discrete;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};

pub use continuous::{ContinuousMaze, Segment, FOUR_ROOMS_WALLS, NOISE_STD, RBF_GRID, RBF_SIGMA, STEP_SIZE};
pub use cycle::CycleWorld;
pub use discrete::{DiscreteMaze, FOUR_ROOMS_LAYOUT, MAZE_ACTION_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Environment state. Discrete mazes and cycles use `Cell`, the continuous
/// maze uses `Point`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Cell(usize),
    Point { x: f64, y: f64 },
}

impl State {
    pub fn cell(self) -> Option<usize> {
        match self {
            State::Cell(c) => Some(c),
            State::Point { .. } => None,
        }
    }

    pub fn point(self) -> Option<(f64, f64)> {
        match self {
            State::Point { x, y } => Some((x, y)),
            State::Cell(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvId {
    DiscreteMaze,
    ContinuousMaze,
    Cycle(usize),
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvId::DiscreteMaze => f.write_str("discrete_maze"),
            EnvId::ContinuousMaze => f.write_str("continuous_maze"),
            EnvId::Cycle(k) => write!(f, "cycle:{k}"),
        }
    }
}

impl FromStr for EnvId {
    type Err = FbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete_maze" => Ok(EnvId::DiscreteMaze),
            "continuous_maze" => Ok(EnvId::ContinuousMaze),
            "cycle" => Ok(EnvId::Cycle(8)),
            other => match other.strip_prefix("cycle:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 3 => Ok(EnvId::Cycle(k)),
                _ => Err(FbError::Config(format!("unknown environment `{other}`"))),
            },
        }
    }
}

/// Full transition kernel of a finite environment, stored densely as
/// `P[(s, a), s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvDynamics {
    num_states: usize,
    num_actions: usize,
    kernel: Vec<f64>,
}

impl EnvDynamics {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        EnvDynamics {
            num_states,
            num_actions,
            kernel: vec![0.0; num_states * num_actions * num_states],
        }
    }

    /// Build from explicit rows (`rows[s * A + a]` is a distribution over s').
    pub fn from_rows(num_states: usize, num_actions: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != num_states * num_actions {
            return Err(FbError::shape(num_states * num_actions, rows.len()));
        }
        let mut d = Self::zeros(num_states, num_actions);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_states {
                return Err(FbError::shape(num_states, row.len()));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(FbError::Format(format!("row {i} is not a distribution")));
            }
            d.kernel[i * num_states..(i + 1) * num_states].copy_from_slice(row);
        }
        Ok(d)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn set(&mut self, s: usize, a: usize, next: usize, p: f64) {
        let n = self.num_states;
        self.kernel[(s * self.num_actions + a) * n + next] = p;
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.kernel[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.kernel[start..start + n]
    }

    /// Sub-kernel over `states` (re-indexed in the given order). Fails if any
    /// listed state can leave the subset.
    pub fn restrict(&self, states: &[usize]) -> Result<EnvDynamics> {
        let mut index = vec![usize::MAX; self.num_states];
        for (i, &s) in states.iter().enumerate() {
            index[s] = i;
        }
        let mut out = EnvDynamics::zeros(states.len(), self.num_actions);
        for (i, &s) in states.iter().enumerate() {
            for a in 0..self.num_actions {
                for (next, &p) in self.row(s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    if index[next] == usize::MAX {
                        return Err(FbError::Format(format!(
                            "state {s} leaks probability to {next} outside the subset"
                        )));
                    }
                    out.set(i, a, index[next], p);
                }
            }
        }
        Ok(out)
    }
}

/// One of the supported environments.
#[derive(Clone, Debug, PartialEq)]
pub enum Env {
    DiscreteMaze(DiscreteMaze),
    ContinuousMaze(ContinuousMaze),
    Cycle(CycleWorld),
}

impl Env {
    pub fn from_id(id: EnvId) -> Self {
        match id {
            EnvId::DiscreteMaze => Env::DiscreteMaze(DiscreteMaze::four_rooms()),
            EnvId::ContinuousMaze => Env::ContinuousMaze(ContinuousMaze::four_rooms()),
            EnvId::Cycle(k) => Env::Cycle(CycleWorld::new(k)),
        }
    }

    pub fn id(&self) -> EnvId {
        match self {
            Env::DiscreteMaze(_) => EnvId::DiscreteMaze,
            Env::ContinuousMaze(_) => EnvId::ContinuousMaze,
            Env::Cycle(c) => EnvId::Cycle(c.len()),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Env::DiscreteMaze(_) | Env::ContinuousMaze(_) => 5,
            Env::Cycle(_) => 3,
        }
    }

    /// Length of the state feature vector fed to F.
    pub fn feature_dim(&self) -> usize {
        match self {
            Env::DiscreteMaze(m) => m.num_cells(),
            Env::ContinuousMaze(_) => RBF_GRID * RBF_GRID,
            Env::Cycle(c) => c.len(),
        }
    }

    /// Length of the goal vector φ(s, a) fed to B. The action is dropped, so
    /// φ(s, a) is the state feature vector.
    pub fn goal_dim(&self) -> usize {
        self.feature_dim()
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Env::ContinuousMaze(_))
    }

    /// Number of states of a finite environment (including dead wall cells).
    pub fn num_states(&self) -> Option<usize> {
        match self {
            Env::DiscreteMaze(m) => Some(m.num_cells()),
            Env::ContinuousMaze(_) => None,
            Env::Cycle(c) => Some(c.len()),
        }
    }

    /// Reachable states of a finite environment.
    pub fn valid_cells(&self) -> Option<Vec<usize>> {
        match self {
            Env::DiscreteMaze(m) => Some(m.open_cells().to_vec()),
            Env::ContinuousMaze(_) => None,
            Env::Cycle(c) => Some((0..c.len()).collect()),
        }
    }

    pub fn is_valid(&self, state: &State) -> bool {
        match (self, state) {
            (Env::DiscreteMaze(m), State::Cell(c)) => *c < m.num_cells() && !m.is_wall(*c),
            (Env::Cycle(cy), State::Cell(c)) => *c < cy.len(),
            (Env::ContinuousMaze(_), State::Point { x, y }) => {
                (0.0..=1.0).contains(x) && (0.0..=1.0).contains(y)
            }
            _ => false,
        }
    }

    /// Write the feature vector of `state` into `out` (length
    /// [`Env::feature_dim`]).
    pub fn featurize_into(&self, state: &State, out: &mut [f64]) {
        match (self, state) {
            (Env::DiscreteMaze(_), State::Cell(c)) | (Env::Cycle(_), State::Cell(c)) => {
                out.fill(0.0);
                out[*c] = 1.0;
            }
            (Env::ContinuousMaze(_), State::Point { x, y }) => {
                ContinuousMaze::featurize_into((*x, *y), out)
            }
            _ => panic!("state {state:?} does not belong to {}", self.id()),
        }
    }

    pub fn featurize(&self, state: &State) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim()];
        self.featurize_into(state, &mut out);
        out
    }

    /// Goal features φ(s, a) = features of s.
    pub fn goal_features_into(&self, state: &State, _action: Action, out: &mut [f64]) {
        self.featurize_into(state, out)
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &State, action: Action, rng: &mut R) -> State {
        match (self, state) {
            (Env::DiscreteMaze(m), State::Cell(c)) => State::Cell(m.step(*c, action)),
            (Env::Cycle(cy), State::Cell(c)) => State::Cell(cy.step(*c, action)),
            (Env::ContinuousMaze(m), State::Point { x, y }) => {
                let (x, y) = m.step((*x, *y), action, rng);
                State::Point { x, y }
            }
            _ => panic!("state {state:?} does not belong to {}", self.id()),
        }
    }

    /// Initial state: uniform over open cells, or uniform on the square.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Env::DiscreteMaze(m) => {
                let open = m.open_cells();
                State::Cell(open[rng.random_range(0..open.len())])
            }
            Env::Cycle(c) => State::Cell(rng.random_range(0..c.len())),
            Env::ContinuousMaze(m) => {
                let (x, y) = m.sample_point(rng);
                State::Point { x, y }
            }
        }
    }

    pub fn exact_dynamics(&self) -> Result<EnvDynamics> {
        match self {
            Env::DiscreteMaze(m) => Ok(m.dynamics()),
            Env::Cycle(c) => Ok(c.dynamics()),
            Env::ContinuousMaze(_) => Err(FbError::UnsupportedEnv(self.id().to_string())),
        }
    }
}
