#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use fbrep::diffnet::DenseNet;
use fbrep::envs::{Env, EnvId, State};
use fbrep::model::{sample_z, FbArch, FbModel};
use fbrep::train::Hyperparams;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Environment and hyperparameters of every run configuration shipped in
/// `configs/`.
pub fn shipped_configs() -> Vec<(String, EnvId, Hyperparams)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let table: toml::Table = std::fs::read_to_string(&p).unwrap().parse().unwrap();
            let env: EnvId = table["env"].as_str().unwrap().parse().unwrap();
            let hp_text = toml::to_string(table.get("hyperparams").unwrap()).unwrap();
            let hp = Hyperparams::from_toml(&hp_text, env).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), env, hp)
        })
        .collect()
}

/// Every (environment, architecture) used in the repo: the shipped configs
/// plus the small nets of the CLI and service tests.
pub fn architecture_matrix() -> Vec<(String, EnvId, FbArch)> {
    let mut out: Vec<(String, EnvId, FbArch)> =
        shipped_configs().into_iter().map(|(name, env, hp)| (name, env, hp.arch())).collect();
    out.push(("cli-small".into(), EnvId::DiscreteMaze, FbArch::new(8, &[16])));
    out.push(("service-small".into(), EnvId::ContinuousMaze, FbArch::new(8, &[16, 16])));
    out.push(("cycle".into(), EnvId::Cycle(8), FbArch::new(2, &[32, 32])));
    out
}

pub fn random_states<R: Rng + ?Sized>(env: &Env, n: usize, rng: &mut R) -> Vec<State> {
    (0..n).map(|_| env.reset(rng)).collect()
}

/// Realistic F and B input batches for `model`.
pub fn net_inputs<R: Rng + ?Sized>(model: &FbModel, n: usize, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let states = random_states(model.env(), n, rng);
    let zs: Vec<Vec<f64>> = (0..n).map(|_| sample_z(model.d(), rng).0).collect();
    let zr: Vec<&[f64]> = zs.iter().map(Vec::as_slice).collect();
    (model.f_inputs(&states, &zr).unwrap(), model.b_inputs(&states))
}

pub fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn objective(net: &DenseNet, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (&net.forward_batch(x.view()).unwrap() * c).sum()
}

/// Relative errors of `probes` random gradient coordinates of
/// `⟨net(x), c⟩` against central differences. The denominator is floored
/// well above the difference quotient's roundoff, so near-zero coordinates
/// are judged on absolute error.
pub fn gradient_probe_errors<R: Rng + ?Sized>(
    net: &DenseNet,
    x: &Array2<f64>,
    c: &Array2<f64>,
    probes: usize,
    rng: &mut R,
) -> Vec<f64> {
    let cache = net.forward_cached(x.clone(), None).unwrap();
    let grad = net.backward(&cache, c.view()).unwrap().flatten();
    let theta = net.flatten();
    let h = 1e-5;
    let mut probe = net.clone();
    (0..probes)
        .map(|_| {
            let k = rng.random_range(0..theta.len());
            let mut t = theta.clone();
            t[k] = theta[k] + h;
            probe.set_flat(&t).unwrap();
            let up = objective(&probe, x, c);
            t[k] = theta[k] - h;
            probe.set_flat(&t).unwrap();
            let down = objective(&probe, x, c);
            let fd = (up - down) / (2.0 * h);
            let roundoff = 1e5 * f64::EPSILON * up.abs().max(down.abs()) / h;
            let scale = grad[k].abs().max(fd.abs()).max(roundoff).max(1e-12);
            (grad[k] - fd).abs() / scale
        })
        .collect()
}
