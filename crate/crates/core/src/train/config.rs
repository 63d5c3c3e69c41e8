use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{FbError, Result};
use crate::model::{FbArch, PolicyKind};
use crate::replay::DEFAULT_CAPACITY;

/// Evaluation protocol run after training epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of fixed random goals.
    pub goals: usize,
    /// Evaluate after every `every` epochs (and after the last one); 0 disables.
    pub every: usize,
    pub policy: PolicyKind,
    /// Rollout length for environments scored by success rate.
    pub horizon: usize,
    /// Success iff the final distance to the goal is below this.
    pub success_threshold: f64,
    /// Rollouts per goal (random starts) for success-rate scoring.
    pub starts_per_goal: usize,
}

impl EvalConfig {
    pub fn for_env(env: EnvId) -> Self {
        let policy = match env {
            EnvId::DiscreteMaze => PolicyKind::Boltzmann { tau: 1.0 },
            _ => PolicyKind::EpsilonGreedy { epsilon: 0.02 },
        };
        EvalConfig {
            goals: 20,
            every: 1,
            policy,
            horizon: 100,
            success_threshold: 0.1,
            starts_per_goal: 1,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::for_env(EnvId::DiscreteMaze)
    }
}

/// Training hyperparameters. Defaults follow the per-environment table of
/// the reference setup, except `hidden`, which callers often shrink.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Temperature of the target-policy softmax.
    pub tau: f64,
    /// Weight of the orthonormality regularizer.
    pub lambda_reg: f64,
    /// Polyak coefficient α of the target networks.
    pub polyak: f64,
    /// Behaviour policy ε (1 = uniform).
    pub explore_epsilon: f64,
    pub episodes_per_cycle: usize,
    pub steps_per_episode: usize,
    pub updates_per_cycle: usize,
    pub cycles_per_epoch: usize,
    pub epochs: usize,
    pub d: usize,
    /// Hidden widths of F, and of B unless `b_hidden` is set.
    pub hidden: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_hidden: Option<Vec<usize>>,
    pub seed: u64,
    pub replay_capacity: usize,
    pub eval: EvalConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::for_env(EnvId::DiscreteMaze)
    }
}

impl Hyperparams {
    pub fn for_env(env: EnvId) -> Self {
        let (steps, lr) = match env {
            EnvId::DiscreteMaze => (50, 1e-3),
            EnvId::ContinuousMaze => (30, 5e-4),
            EnvId::Cycle(_) => (50, 1e-3),
        };
        Hyperparams {
            gamma: 0.99,
            learning_rate: lr,
            batch_size: 128,
            tau: 200.0,
            lambda_reg: 1.0,
            polyak: 0.95,
            explore_epsilon: 1.0,
            episodes_per_cycle: 4,
            steps_per_episode: steps,
            updates_per_cycle: 40,
            cycles_per_epoch: 25,
            epochs: 200,
            d: 100,
            hidden: vec![256, 256, 256],
            b_hidden: None,
            seed: 0,
            replay_capacity: DEFAULT_CAPACITY,
            eval: EvalConfig::for_env(env),
        }
    }

    /// Parse a TOML document; keys not present keep the defaults of `env`.
    pub fn from_toml(text: &str, env: EnvId) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| FbError::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::for_env(env)).map_err(|e| FbError::Config(e.to_string()))?;
        merge(&mut base, overrides);
        let hp: Hyperparams = base.try_into().map_err(|e: toml::de::Error| FbError::Config(e.to_string()))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("hyperparameters serialize")
    }

    pub fn arch(&self) -> FbArch {
        FbArch {
            d: self.d,
            f_hidden: self.hidden.clone(),
            b_hidden: self.b_hidden.clone().unwrap_or_else(|| self.hidden.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FbError::InvalidHyperparams(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("γ must be in (0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("τ must be positive, got {}", self.tau));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad(format!("λ_reg must be non-negative, got {}", self.lambda_reg));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad(format!("α must be in [0, 1], got {}", self.polyak));
        }
        if !(0.0..=1.0).contains(&self.explore_epsilon) {
            return bad(format!("ε must be in [0, 1], got {}", self.explore_epsilon));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.hidden.contains(&0) || self.b_hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return bad("hidden layers must be non-empty".into());
        }
        if self.replay_capacity == 0 {
            return bad("replay capacity must be positive".into());
        }
        if !(self.eval.success_threshold > 0.0) {
            return bad("success threshold must be positive".into());
        }
        self.eval.policy.validate()
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "policy" => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let hp = Hyperparams::for_env(EnvId::DiscreteMaze);
        assert_eq!((hp.episodes_per_cycle, hp.steps_per_episode), (4, 50));
        assert_eq!((hp.updates_per_cycle, hp.cycles_per_epoch, hp.batch_size), (40, 25, 128));
        assert_eq!((hp.learning_rate, hp.gamma, hp.tau, hp.polyak), (1e-3, 0.99, 200.0, 0.95));
        assert_eq!(hp.eval.policy, PolicyKind::Boltzmann { tau: 1.0 });
        let hp = Hyperparams::for_env(EnvId::ContinuousMaze);
        assert_eq!((hp.steps_per_episode, hp.learning_rate), (30, 5e-4));
        assert_eq!(hp.eval.policy, PolicyKind::EpsilonGreedy { epsilon: 0.02 });
        assert_eq!(hp.replay_capacity, 1_000_000);
    }

    #[test]
    fn toml_overrides_keep_env_defaults() {
        let hp = Hyperparams::from_toml(
            "d = 25\nhidden = [64, 64]\nb_hidden = [32]\n[eval]\nevery = 5\npolicy = { epsilon_greedy = { epsilon = 0.1 } }\n",
            EnvId::ContinuousMaze,
        )
        .unwrap();
        assert_eq!(hp.d, 25);
        assert_eq!(hp.hidden, vec![64, 64]);
        assert_eq!(hp.arch().b_hidden, vec![32]);
        assert_eq!(hp.learning_rate, 5e-4);
        assert_eq!(hp.eval.every, 5);
        assert_eq!(hp.eval.goals, 20);
        assert_eq!(hp.eval.policy, PolicyKind::EpsilonGreedy { epsilon: 0.1 });
        let back = Hyperparams::from_toml(&hp.to_toml(), EnvId::DiscreteMaze).unwrap();
        assert_eq!(back, hp);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in ["gamma = 1.0", "batch_size = 0", "lerning_rate = 0.1", "d = \"ten\"", "= broken"] {
            let err = Hyperparams::from_toml(text, EnvId::DiscreteMaze).unwrap_err();
            assert!(matches!(err, FbError::Config(_) | FbError::InvalidHyperparams(_)), "{text}");
        }
    }
}
