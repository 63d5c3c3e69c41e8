use nalgebra::{DMatrix, DVector};

use crate::envs::{DiscreteMaze, EnvDynamics};
use crate::error::{FbError, Result};
use crate::model::argmax;
use crate::oracle::TabularPolicy;

/// Optimal action-values, state values and the greedy policy
/// (lowest-index ties).
#[derive(Clone, Debug)]
pub struct ValueSolution {
    /// `|S| · |A|`, indexed `s · |A| + a`.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
}

impl ValueSolution {
    pub fn tabular_policy(&self, num_actions: usize) -> TabularPolicy {
        TabularPolicy::deterministic(num_actions, &self.policy)
    }
}

/// For each state-action pair, the `(next, p)` entries with `p > 0`.
fn sparse_rows(dynamics: &EnvDynamics) -> Vec<Vec<(usize, f64)>> {
    let (ns, na) = (dynamics.num_states(), dynamics.num_actions());
    (0..ns * na)
        .map(|x| {
            dynamics
                .row(x / na, x % na)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(j, &p)| (j, p))
                .collect()
        })
        .collect()
}

/// Iterate the optimal Bellman operator until `‖Q − Q*‖∞ ≤ tol`, using the
/// contraction bound on successive iterates as the stopping rule.
pub fn value_iteration(dynamics: &EnvDynamics, reward: &[f64], gamma: f64, tol: f64) -> Result<ValueSolution> {
    let (ns, na) = (dynamics.num_states(), dynamics.num_actions());
    if reward.len() != ns * na {
        return Err(FbError::shape(ns * na, reward.len()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(FbError::InvalidHyperparams(format!("γ must be in [0, 1), got {gamma}")));
    }
    let rows = sparse_rows(dynamics);
    let mut q = reward.to_vec();
    let mut v = vec![0.0; ns];
    let stop = if gamma == 0.0 { f64::INFINITY } else { tol * (1.0 - gamma) / gamma };
    loop {
        for s in 0..ns {
            v[s] = q[s * na..(s + 1) * na].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        }
        let mut delta = 0.0f64;
        for (x, row) in rows.iter().enumerate() {
            let next = reward[x] + gamma * row.iter().map(|&(j, p)| p * v[j]).sum::<f64>();
            delta = delta.max((next - q[x]).abs());
            q[x] = next;
        }
        if delta <= stop {
            break;
        }
    }
    let mut policy = Vec::with_capacity(ns);
    for s in 0..ns {
        let row = &q[s * na..(s + 1) * na];
        let a = argmax(row);
        policy.push(a);
        v[s] = row[a];
    }
    Ok(ValueSolution { q, v, policy })
}

/// State values `V = (I − γ P_π)⁻¹ r_π` of a policy for a state-action
/// reward table.
pub fn policy_values(dynamics: &EnvDynamics, policy: &TabularPolicy, reward: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let (ns, na) = (dynamics.num_states(), dynamics.num_actions());
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(FbError::shape(
            format!("{ns}×{na} policy"),
            format!("{}×{}", policy.num_states(), policy.num_actions()),
        ));
    }
    if reward.len() != ns * na {
        return Err(FbError::shape(ns * na, reward.len()));
    }
    let mut system = DMatrix::identity(ns, ns);
    let mut r = DVector::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            r[s] += pa * reward[s * na + a];
            for (next, &p) in dynamics.row(s, a).iter().enumerate() {
                if p != 0.0 {
                    system[(s, next)] -= gamma * pa * p;
                }
            }
        }
    }
    let v = system.lu().solve(&r).ok_or(FbError::Singular)?;
    Ok(v.iter().copied().collect())
}

/// Sparse goal reward `r(s, a) = 1[s = goal]`.
pub fn state_reward(num_states: usize, num_actions: usize, goal: usize) -> Vec<f64> {
    let mut r = vec![0.0; num_states * num_actions];
    r[goal * num_actions..(goal + 1) * num_actions].fill(1.0);
    r
}

/// Mean over open start cells of `V^π(s) / V*(s)` for the reward
/// `1[s = goal]`. `policy` has one row per maze cell; wall rows are ignored.
pub fn policy_quality(maze: &DiscreteMaze, policy: &TabularPolicy, goal: usize, gamma: f64) -> Result<f64> {
    if goal >= maze.num_cells() {
        return Err(FbError::shape(format!("cell < {}", maze.num_cells()), goal));
    }
    if maze.is_wall(goal) {
        return Err(FbError::WallCell(goal));
    }
    goal_quality(&maze.dynamics(), maze.open_cells(), policy, goal, gamma)
}

/// [`policy_quality`] for any finite environment: start states are
/// `states`, which must be closed under the dynamics and contain `goal`.
pub fn goal_quality(
    dynamics: &EnvDynamics,
    states: &[usize],
    policy: &TabularPolicy,
    goal: usize,
    gamma: f64,
) -> Result<f64> {
    if policy.num_states() != dynamics.num_states() {
        return Err(FbError::shape(dynamics.num_states(), policy.num_states()));
    }
    let local_goal = states
        .iter()
        .position(|&c| c == goal)
        .ok_or_else(|| FbError::shape("goal among the start states", goal))?;
    let dynamics = dynamics.restrict(states)?;
    let reward = state_reward(states.len(), dynamics.num_actions(), local_goal);
    let optimal = value_iteration(&dynamics, &reward, gamma, 1e-12)?;
    if let Some(i) = optimal.v.iter().position(|&v| v <= 0.0) {
        return Err(FbError::UnreachableGoal(states[i]));
    }
    let values = policy_values(&dynamics, &policy.restrict(states), &reward, gamma)?;
    let ratios: f64 = values.iter().zip(&optimal.v).map(|(v, vs)| v / vs).sum();
    Ok(ratios / states.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Action, Env, EnvId};
    use crate::oracle::successor_measure_exact;

    #[test]
    fn zero_reward_zero_values() {
        let maze = DiscreteMaze::four_rooms();
        let sol = value_iteration(&maze.dynamics(), &vec![0.0; 121 * 5], 0.99, 1e-10).unwrap();
        assert!(sol.q.iter().all(|&q| q == 0.0));
        assert!(sol.policy.iter().all(|&a| a == 0));
    }

    #[test]
    fn goal_value_matches_shortest_path() {
        let maze = DiscreteMaze::four_rooms();
        let goal = maze.cell(8, 9);
        let gamma = 0.95;
        let sol = value_iteration(&maze.dynamics(), &state_reward(121, 5, goal), gamma, 1e-12).unwrap();
        let dist = maze.distances_to(goal);
        for &s in maze.open_cells() {
            let n = dist[s].unwrap();
            let expect = gamma.powi(n as i32) / (1.0 - gamma);
            assert!((sol.v[s] - expect).abs() < 1e-9, "cell {s}");
            let mut cell = s;
            for _ in 0..n {
                cell = maze.step(cell, Action(sol.policy[cell]));
            }
            assert_eq!(cell, goal);
        }
    }

    #[test]
    fn q_star_is_reward_integrated_against_successor_measure() {
        let env = Env::from_id(EnvId::Cycle(6));
        let d = env.exact_dynamics().unwrap();
        let reward: Vec<f64> = (0..18).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let sol = value_iteration(&d, &reward, 0.9, 1e-12).unwrap();
        let m = successor_measure_exact(&d, &sol.tabular_policy(3), 0.9).unwrap();
        for x in 0..18 {
            let q: f64 = (0..18).map(|y| m.m[(x, y)] * reward[y]).sum();
            assert!((q - sol.q[x]).abs() < 1e-9);
        }
    }

    #[test]
    fn optimal_policy_has_quality_one() {
        let maze = DiscreteMaze::four_rooms();
        let goal = maze.cell(1, 1);
        let sol = value_iteration(&maze.dynamics(), &state_reward(121, 5, goal), 0.99, 1e-12).unwrap();
        let q = policy_quality(&maze, &sol.tabular_policy(5), goal, 0.99).unwrap();
        assert!((q - 1.0).abs() < 1e-9);
        let uniform = policy_quality(&maze, &TabularPolicy::uniform(121, 5), goal, 0.99).unwrap();
        assert!(uniform < 1.0);
    }

    #[test]
    fn always_right_on_open_grid() {
        let maze = DiscreteMaze::open_grid(5, 5);
        let goal = maze.cell(2, 4);
        let gamma = 0.9;
        let right = TabularPolicy::deterministic(5, &[1; 25]);
        let quality = policy_quality(&maze, &right, goal, gamma).unwrap();
        // deterministic dynamics and policy: one truncated rollout per start
        let mut total = 0.0;
        for s in 0..25 {
            let (mut cell, mut disc, mut value) = (s, 1.0, 0.0);
            while disc > 1e-14 {
                if cell == goal {
                    value += disc;
                }
                cell = maze.step(cell, Action(1));
                disc *= gamma;
            }
            let n = maze.distances_to(goal)[s].unwrap() as i32;
            total += value / (gamma.powi(n) / (1.0 - gamma));
        }
        assert!((quality - total / 25.0).abs() < 1e-6);
        assert!((quality - 0.2).abs() < 1e-9);
    }

    #[test]
    fn wall_and_unreachable_goals() {
        let maze = DiscreteMaze::four_rooms();
        let p = TabularPolicy::uniform(121, 5);
        assert!(matches!(policy_quality(&maze, &p, 5, 0.9), Err(FbError::WallCell(5))));
        let split = DiscreteMaze::parse("..#..\n..#..").unwrap();
        let p = TabularPolicy::uniform(10, 5);
        assert!(matches!(policy_quality(&split, &p, 0, 0.9), Err(FbError::UnreachableGoal(_))));
    }
}
