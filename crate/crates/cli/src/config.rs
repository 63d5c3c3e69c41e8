//! Run configuration of `fb train`: a TOML file with top-level `env`,
//! `seed`, `model` and `metrics` keys and a `[hyperparams]` table, with
//! command-line flags taking precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use fbrep::envs::EnvId;
use fbrep::train::Hyperparams;

use crate::error::{CliError, CliResult};

pub const DEFAULT_MODEL_PATH: &str = "model.fb";
pub const DEFAULT_METRICS_PATH: &str = "metrics.csv";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    env: Option<String>,
    seed: Option<u64>,
    model: Option<PathBuf>,
    metrics: Option<PathBuf>,
    hyperparams: Option<toml::Table>,
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub env: Option<String>,
    pub d: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvId,
    pub hyperparams: Hyperparams,
    pub model: PathBuf,
    pub metrics: PathBuf,
}

impl RunConfig {
    /// Build from optional TOML text plus overrides. The environment
    /// defaults to the discrete maze.
    pub fn resolve(text: Option<&str>, ov: &Overrides) -> CliResult<Self> {
        let file: RunConfigFile = match text {
            Some(t) => toml::from_str(t).map_err(|e| CliError::config(e.to_string()))?,
            None => RunConfigFile::default(),
        };
        let env_name = ov.env.clone().or(file.env).unwrap_or_else(|| "discrete_maze".into());
        let env: EnvId = env_name.parse().map_err(|e: fbrep::FbError| CliError::config(e.to_string()))?;
        let hp_text = toml::to_string(&file.hyperparams.unwrap_or_default())
            .map_err(|e| CliError::config(e.to_string()))?;
        let mut hp = Hyperparams::from_toml(&hp_text, env)?;
        if let Some(seed) = ov.seed.or(file.seed) {
            hp.seed = seed;
        }
        if let Some(d) = ov.d {
            hp.d = d;
        }
        if let Some(epochs) = ov.epochs {
            hp.epochs = epochs;
        }
        hp.validate()?;
        let model = ov.model.clone().or(file.model).unwrap_or_else(|| DEFAULT_MODEL_PATH.into());
        let metrics = ov.metrics.clone().or(file.metrics).unwrap_or_else(|| DEFAULT_METRICS_PATH.into());
        check_writable(&model)?;
        check_writable(&metrics)?;
        Ok(RunConfig {
            env,
            hyperparams: hp,
            model,
            metrics,
        })
    }
}

fn check_writable(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        return Err(CliError::config(format!("{} is a directory", path.display())));
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::config(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let c = RunConfig::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(c.env, EnvId::DiscreteMaze);
        assert_eq!(c.hyperparams, Hyperparams::for_env(EnvId::DiscreteMaze));
        assert_eq!(c.model, PathBuf::from(DEFAULT_MODEL_PATH));
    }

    #[test]
    fn flags_override_file() {
        let text = "env = \"continuous_maze\"\nseed = 4\n[hyperparams]\nd = 32\nseed = 9\nhidden = [16]\n";
        let c = RunConfig::resolve(Some(text), &Overrides::default()).unwrap();
        assert_eq!(c.env, EnvId::ContinuousMaze);
        assert_eq!((c.hyperparams.d, c.hyperparams.seed), (32, 4));
        assert_eq!(c.hyperparams.learning_rate, 5e-4);
        let ov = Overrides {
            env: Some("discrete_maze".into()),
            d: Some(8),
            epochs: Some(3),
            seed: Some(1),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(Some(text), &ov).unwrap();
        assert_eq!(c.env, EnvId::DiscreteMaze);
        assert_eq!((c.hyperparams.d, c.hyperparams.epochs, c.hyperparams.seed), (8, 3, 1));
        assert_eq!(c.hyperparams.hidden, vec![16]);
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            "env = \"nowhere\"",
            "colour = 3",
            "[hyperparams]\ngamma = 1.5",
            "[hyperparams]\nbogus = 1",
            "this is not toml",
        ];
        for text in cases {
            let err = RunConfig::resolve(Some(text), &Overrides::default()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
        let ov = Overrides {
            model: Some("/no/such/dir/model.fb".into()),
            ..Overrides::default()
        };
        assert_eq!(RunConfig::resolve(None, &ov).unwrap_err().exit_code(), 2);
    }
}
