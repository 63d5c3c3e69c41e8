//! Exact ground truth on finite environments.
//!
//! Everything here is dense linear algebra over the state-action space
//! (at most a few hundred pairs), so results are reproducible to rounding
//! error and serve as references for the learned model.

mod consistency;
mod cycle;
mod exact;
mod td;
mod value;

use nalgebra::DMatrix;

use crate::envs::EnvDynamics;
use crate::error::{FbError, Result};

pub use consistency::{succ_pred_consistency, ConsistencyReport};
pub use cycle::AnalyticCycleFb;
pub use exact::ExactFb;
pub use td::{max_relative_error, TabularDensityTd};
pub use value::{goal_quality, policy_quality, policy_values, state_reward, value_iteration, ValueSolution};

/// Row-stochastic `|S| × |A|` policy table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(FbError::shape(num_states * num_actions, probs.len()));
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..(s + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(FbError::Format(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(TabularPolicy {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        TabularPolicy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy from one action per state.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        TabularPolicy {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    /// Build from a per-state distribution function.
    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            let row = f(s);
            if row.len() != num_actions {
                return Err(FbError::shape(num_actions, row.len()));
            }
            probs.extend(row);
        }
        Self::new(num_states, num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Keep only the rows of `states`, in that order.
    pub fn restrict(&self, states: &[usize]) -> Self {
        let mut probs = Vec::with_capacity(states.len() * self.num_actions);
        for &s in states {
            probs.extend_from_slice(self.row(s));
        }
        TabularPolicy {
            num_states: states.len(),
            num_actions: self.num_actions,
            probs,
        }
    }
}

/// Exact successor measure `M^π = Σ_t γ^t P_t^π` over state-action pairs,
/// indexed `(s · |A| + a) × (s' · |A| + a')`.
#[derive(Clone, Debug)]
pub struct SuccessorMeasure {
    pub m: DMatrix<f64>,
    pub gamma: f64,
    pub policy: TabularPolicy,
}

impl SuccessorMeasure {
    /// Density with respect to ρ: `m = M diag(1/ρ)`.
    pub fn density(&self, rho: &[f64]) -> Result<DMatrix<f64>> {
        check_rho(rho, self.m.ncols())?;
        let mut out = self.m.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col /= rho[j];
        }
        Ok(out)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.m.row_iter().map(|r| r.sum()).collect()
    }

    pub fn num_pairs(&self) -> usize {
        self.m.nrows()
    }
}

pub(crate) fn check_rho(rho: &[f64], n: usize) -> Result<()> {
    if rho.len() != n {
        return Err(FbError::shape(n, rho.len()));
    }
    if let Some(i) = rho.iter().position(|&p| !(p > 0.0)) {
        return Err(FbError::NonPositiveRho(i));
    }
    Ok(())
}

/// State-action chain `PΠ[(s, a), (s', a')] = P(s' | s, a) π(a' | s')`.
pub fn state_action_chain(dynamics: &EnvDynamics, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
    let (ns, na) = (dynamics.num_states(), dynamics.num_actions());
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(FbError::shape(
            format!("{ns}×{na} policy"),
            format!("{}×{}", policy.num_states(), policy.num_actions()),
        ));
    }
    let n = ns * na;
    let mut chain = DMatrix::zeros(n, n);
    for s in 0..ns {
        for a in 0..na {
            let x = s * na + a;
            for (next, &p) in dynamics.row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    chain[(x, next * na + a2)] += p * policy.prob(next, a2);
                }
            }
        }
    }
    Ok(chain)
}

/// Solve `(I − γ PΠ) M = I` by dense LU.
pub fn successor_measure_exact(
    dynamics: &EnvDynamics,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<SuccessorMeasure> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(FbError::InvalidHyperparams(format!("γ must be in [0, 1), got {gamma}")));
    }
    let chain = state_action_chain(dynamics, policy)?;
    let n = chain.nrows();
    let system = DMatrix::identity(n, n) - chain * gamma;
    let m = system
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or(FbError::Singular)?;
    Ok(SuccessorMeasure {
        m,
        gamma,
        policy: policy.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0 → 1 → 2 with a single action; 2 is absorbing if `absorbing`,
    /// otherwise the chain terminates there (no outgoing mass).
    fn chain3(absorbing: bool) -> EnvDynamics {
        let mut d = EnvDynamics::zeros(3, 1);
        d.set(0, 0, 1, 1.0);
        d.set(1, 0, 2, 1.0);
        if absorbing {
            d.set(2, 0, 2, 1.0);
        }
        d
    }

    /// Σ_{t ≤ T} γ^t P^t for a single-action chain, by repeated products.
    fn brute_force(d: &EnvDynamics, gamma: f64) -> DMatrix<f64> {
        let n = d.num_states();
        let p = DMatrix::from_fn(n, n, |i, j| d.prob(i, 0, j));
        let mut acc = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        let mut scale = 1.0;
        while scale > 1e-16 {
            term = &term * &p;
            scale *= gamma;
            acc += &term * scale;
        }
        acc
    }

    #[test]
    fn self_loop_is_geometric() {
        let mut d = EnvDynamics::zeros(1, 1);
        d.set(0, 0, 0, 1.0);
        let m = successor_measure_exact(&d, &TabularPolicy::uniform(1, 1), 0.9).unwrap();
        assert!((m.m[(0, 0)] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_is_identity() {
        let d = chain3(true);
        let m = successor_measure_exact(&d, &TabularPolicy::uniform(3, 1), 0.0).unwrap();
        assert_eq!(m.m, DMatrix::identity(3, 3));
    }

    #[test]
    fn chain_matches_brute_force() {
        let d = chain3(false);
        let m = successor_measure_exact(&d, &TabularPolicy::uniform(3, 1), 0.5).unwrap();
        let bf = brute_force(&d, 0.5);
        assert!((bf[(0, 2)] - 0.25).abs() < 1e-15);
        assert!((m.m[(0, 2)] - 0.25).abs() < 1e-15);
        assert!((&m.m - &bf).abs().max() < 1e-12);

        let d = chain3(true);
        let m = successor_measure_exact(&d, &TabularPolicy::uniform(3, 1), 0.5).unwrap();
        let bf = brute_force(&d, 0.5);
        assert!((m.m[(0, 2)] - 0.5).abs() < 1e-12);
        assert!((&m.m - &bf).abs().max() < 1e-12);
        for s in m.row_sums() {
            assert!((s - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_policy_shape() {
        let d = chain3(true);
        assert!(successor_measure_exact(&d, &TabularPolicy::uniform(2, 1), 0.5).is_err());
        assert!(successor_measure_exact(&d, &TabularPolicy::uniform(3, 1), 1.0).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(TabularPolicy::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(TabularPolicy::new(1, 2, vec![0.5, 0.5]).is_ok());
        let p = TabularPolicy::deterministic(3, &[2, 0]);
        assert_eq!(p.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(p.restrict(&[1]).row(0), &[1.0, 0.0, 0.0]);
    }
}
