use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::envs::EnvDynamics;
use crate::error::{FbError, Result};
use crate::oracle::{check_rho, TabularPolicy};

/// Tabular model `m(x, y)` of the successor density over state-action pairs,
/// trained with the off-policy TD update
///
/// `m(x₀, x₀) += η`, `m(x₀, y) += η (γ m(x₁, y) − m(x₀, y))`
///
/// where `x₀ = (s₀, a) ∼ ρ`, `s₁ ∼ P(·|s₀, a)`, `a₁ ∼ π(·|s₁)` and `y ∼ ρ`
/// independently. Its expected fixed point is `M^π diag(1/ρ)`.
#[derive(Clone, Debug)]
pub struct TabularDensityTd {
    pub m: DMatrix<f64>,
    pub gamma: f64,
    pub lr: f64,
    num_actions: usize,
}

impl TabularDensityTd {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64, lr: f64) -> Self {
        let n = num_states * num_actions;
        TabularDensityTd {
            m: DMatrix::zeros(n, n),
            gamma,
            lr,
            num_actions,
        }
    }

    /// One update from the pair `x0`, its successor pair `x1` and target `y`.
    pub fn update(&mut self, x0: usize, x1: usize, y: usize) {
        let td = self.gamma * self.m[(x1, y)] - self.m[(x0, y)];
        self.m[(x0, y)] += self.lr * td;
        self.m[(x0, x0)] += self.lr;
    }

    /// Run `steps` sampled updates. Returns the average of the iterates over
    /// the last `tail` updates (`tail = 0` returns the final iterate).
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        dynamics: &EnvDynamics,
        policy: &TabularPolicy,
        rho: &[f64],
        steps: usize,
        tail: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let n = self.m.nrows();
        let na = self.num_actions;
        if dynamics.num_pairs() != n || dynamics.num_actions() != na {
            return Err(FbError::shape(n, dynamics.num_pairs()));
        }
        if policy.num_states() != dynamics.num_states() || policy.num_actions() != na {
            return Err(FbError::shape(dynamics.num_states(), policy.num_states()));
        }
        check_rho(rho, n)?;
        let pairs = WeightedIndex::new(rho).map_err(|e| FbError::Format(e.to_string()))?;
        let kernel: Vec<WeightedIndex<f64>> = (0..n)
            .map(|x| WeightedIndex::new(dynamics.row(x / na, x % na)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| FbError::Format(e.to_string()))?;
        let actions: Vec<WeightedIndex<f64>> = (0..dynamics.num_states())
            .map(|s| WeightedIndex::new(policy.row(s)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| FbError::Format(e.to_string()))?;

        let tail = tail.min(steps);
        let mut avg = DMatrix::zeros(n, n);
        for t in 0..steps {
            let x0 = pairs.sample(rng);
            let s1 = kernel[x0].sample(rng);
            let x1 = s1 * na + actions[s1].sample(rng);
            let y = pairs.sample(rng);
            self.update(x0, x1, y);
            if t + tail >= steps {
                avg += &self.m;
            }
        }
        if tail == 0 {
            Ok(self.m.clone())
        } else {
            Ok(avg / tail as f64)
        }
    }
}

/// Largest entrywise relative error `|a − b| / |b|` over entries with
/// `|b| > floor`, and the largest absolute error elsewhere.
pub fn max_relative_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, floor: f64) -> f64 {
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| if b.abs() > floor { (a - b).abs() / b.abs() } else { (a - b).abs() })
        .fold(0.0, f64::max)
}
