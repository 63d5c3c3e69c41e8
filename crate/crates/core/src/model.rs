//! The FB model: forward map F(s, a, z), backward map B(g), task-vector
//! sampling and preprocessing, and the policies derived from `F(s, a, z)ᵀ z`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffnet::{DenseNet, TargetCopy};
use crate::envs::{Action, Env, EnvId, State};
use crate::error::{FbError, Result};

/// Scale of the Cauchy variable that sets the norm of sampled z's.
pub const Z_CAUCHY_SCALE: f64 = 0.5;

/// A task vector `z ∈ ℝᵈ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskVector(pub Vec<f64>);

impl TaskVector {
    pub fn zeros(d: usize) -> Self {
        TaskVector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TaskVector(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Euclidean norm with max-abs rescaling so huge entries do not overflow.
pub fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// `√d · u · x / ‖x‖` for a given direction sample `x` and scalar `u`.
pub fn z_from_parts(x: &[f64], u: f64) -> TaskVector {
    let d = x.len() as f64;
    let n = norm(x);
    TaskVector(x.iter().map(|xi| d.sqrt() * u * xi / n).collect())
}

/// Draw `z ~ ν`: a uniformly random direction scaled by `√d · u`, with `u`
/// a centred Cauchy variable of scale 0.5.
pub fn sample_z<R: Rng + ?Sized>(d: usize, rng: &mut R) -> TaskVector {
    assert!(d >= 1, "task vectors need d >= 1");
    let x = loop {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if norm(&x) >= 1e-12 {
            break x;
        }
    };
    let u = Cauchy::new(0.0, Z_CAUCHY_SCALE).expect("valid scale").sample(rng);
    z_from_parts(&x, u)
}

/// Squash `z` into the open ball of radius √d: `z / √(1 + ‖z‖² / d)`.
pub fn preprocess_z(z: &[f64]) -> Vec<f64> {
    let d = z.len() as f64;
    let t = norm(z) / d.sqrt();
    let denom = 1.0f64.hypot(t);
    z.iter().map(|v| v / denom).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(values / tau)`, computed with the max subtracted.
pub fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Greedy,
    Boltzmann { tau: f64 },
    EpsilonGreedy { epsilon: f64 },
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyKind::Boltzmann { tau } if !(tau > 0.0) => {
                Err(FbError::Config(format!("temperature must be positive, got {tau}")))
            }
            PolicyKind::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(FbError::Config(format!("epsilon must be in [0, 1], got {epsilon}")))
            }
            _ => Ok(()),
        }
    }

    /// Action distribution induced by the Q-values of one state.
    pub fn probabilities(&self, q: &[f64]) -> Vec<f64> {
        let n = q.len();
        match *self {
            PolicyKind::Greedy => {
                let mut p = vec![0.0; n];
                p[argmax(q)] = 1.0;
                p
            }
            PolicyKind::Boltzmann { tau } => softmax(q, tau),
            PolicyKind::EpsilonGreedy { epsilon } => {
                let mut p = vec![epsilon / n as f64; n];
                p[argmax(q)] += 1.0 - epsilon;
                p
            }
        }
    }

    /// Sample an action from the Q-values of one state.
    pub fn sample<R: Rng + ?Sized>(&self, q: &[f64], rng: &mut R) -> Action {
        match *self {
            PolicyKind::Greedy => Action(argmax(q)),
            PolicyKind::EpsilonGreedy { epsilon } => {
                if rng.random::<f64>() < epsilon {
                    Action(rng.random_range(0..q.len()))
                } else {
                    Action(argmax(q))
                }
            }
            PolicyKind::Boltzmann { .. } => {
                let p = self.probabilities(q);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return Action(i);
                    }
                }
                Action(p.len() - 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub z: TaskVector,
}

/// Anything that maps a state-action pair to a backward embedding `B(s, a)`.
pub trait BackwardMap {
    fn dim(&self) -> usize;

    fn backward(&self, state: &State, action: Action) -> Result<Vec<f64>>;

    /// `B` for many pairs at once, one row per pair.
    fn backward_batch(&self, pairs: &[(State, Action)]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((pairs.len(), self.dim()));
        for (i, (s, a)) in pairs.iter().enumerate() {
            let b = self.backward(s, *a)?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&b));
        }
        Ok(out)
    }
}

/// Network architecture of an FB model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbArch {
    pub d: usize,
    /// Hidden layer widths of F.
    pub f_hidden: Vec<usize>,
    /// Hidden layer widths of B.
    pub b_hidden: Vec<usize>,
}

impl FbArch {
    /// Same hidden layers for F and B.
    pub fn new(d: usize, hidden: &[usize]) -> Self {
        FbArch {
            d,
            f_hidden: hidden.to_vec(),
            b_hidden: hidden.to_vec(),
        }
    }
}

/// Online F and B networks plus their Polyak target copies.
///
/// `f_net` reads `featurize(s) ⧺ preprocess_z(z)` and outputs `|A| · d`
/// values, block `a` being `F(s, a, z)`. `b_net` reads the goal features
/// `φ(s, a)` and outputs `B ∈ ℝᵈ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FbModel {
    env: Env,
    d: usize,
    pub f_net: DenseNet,
    pub b_net: DenseNet,
    pub f_target: TargetCopy,
    pub b_target: TargetCopy,
}

fn f_sizes(env: &Env, arch: &FbArch) -> Vec<usize> {
    let mut sizes = vec![env.feature_dim() + arch.d];
    sizes.extend(&arch.f_hidden);
    sizes.push(env.num_actions() * arch.d);
    sizes
}

fn b_sizes(env: &Env, arch: &FbArch) -> Vec<usize> {
    let mut sizes = vec![env.goal_dim()];
    sizes.extend(&arch.b_hidden);
    sizes.push(arch.d);
    sizes
}

impl FbModel {
    pub fn new<R: Rng + ?Sized>(env: Env, arch: &FbArch, rng: &mut R) -> Self {
        let f_net = DenseNet::new(&f_sizes(&env, arch), rng);
        let b_net = DenseNet::new(&b_sizes(&env, arch), rng);
        Self::from_nets(env, f_net, b_net).expect("consistent shapes")
    }

    pub fn zeros(env: Env, arch: &FbArch) -> Self {
        let f_net = DenseNet::zeros(&f_sizes(&env, arch));
        let b_net = DenseNet::zeros(&b_sizes(&env, arch));
        Self::from_nets(env, f_net, b_net).expect("consistent shapes")
    }

    /// Wrap given online networks; targets start as copies.
    pub fn from_nets(env: Env, f_net: DenseNet, b_net: DenseNet) -> Result<Self> {
        let d = b_net.output_dim();
        if f_net.input_dim() != env.feature_dim() + d {
            return Err(FbError::shape(env.feature_dim() + d, f_net.input_dim()));
        }
        if f_net.output_dim() != env.num_actions() * d {
            return Err(FbError::shape(env.num_actions() * d, f_net.output_dim()));
        }
        if b_net.input_dim() != env.goal_dim() {
            return Err(FbError::shape(env.goal_dim(), b_net.input_dim()));
        }
        let f_target = TargetCopy::of(&f_net);
        let b_target = TargetCopy::of(&b_net);
        Ok(FbModel {
            env,
            d,
            f_net,
            b_net,
            f_target,
            b_target,
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_actions(&self) -> usize {
        self.env.num_actions()
    }

    pub fn arch(&self) -> FbArch {
        let hidden = |sizes: Vec<usize>| sizes[1..sizes.len() - 1].to_vec();
        FbArch {
            d: self.d,
            f_hidden: hidden(self.f_net.sizes()),
            b_hidden: hidden(self.b_net.sizes()),
        }
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.d {
            return Err(FbError::shape(self.d, z.len()));
        }
        Ok(())
    }

    /// F-network input rows `featurize(s_i) ⧺ preprocess_z(z_i)`.
    pub fn f_inputs(&self, states: &[State], zs: &[&[f64]]) -> Result<Array2<f64>> {
        if states.len() != zs.len() {
            return Err(FbError::BatchMismatch(format!(
                "{} states vs {} task vectors",
                states.len(),
                zs.len()
            )));
        }
        let fd = self.env.feature_dim();
        let mut x = Array2::zeros((states.len(), fd + self.d));
        for (i, (s, z)) in states.iter().zip(zs).enumerate() {
            self.check_z(z)?;
            let mut row = x.row_mut(i);
            let row = row.as_slice_mut().expect("contiguous row");
            self.env.featurize_into(s, &mut row[..fd]);
            row[fd..].copy_from_slice(&preprocess_z(z));
        }
        Ok(x)
    }

    /// Goal-feature rows `φ(s_i)` for the B network.
    pub fn b_inputs(&self, states: &[State]) -> Array2<f64> {
        let gd = self.env.goal_dim();
        let mut x = Array2::zeros((states.len(), gd));
        for (i, s) in states.iter().enumerate() {
            let mut row = x.row_mut(i);
            self.env
                .goal_features_into(s, Action(0), row.as_slice_mut().expect("contiguous row"));
        }
        x
    }

    /// `F(s, a, z)` for every action (row `a`), from the online network.
    pub fn forward_f_all(&self, state: &State, z: &[f64]) -> Result<Array2<f64>> {
        let x = self.f_inputs(std::slice::from_ref(state), &[z])?;
        let out = self.f_net.forward_batch(x.view())?;
        Ok(out
            .into_shape_with_order((self.num_actions(), self.d))
            .expect("output is |A| * d"))
    }

    pub fn forward_f(&self, state: &State, action: Action, z: &[f64]) -> Result<Vec<f64>> {
        if action.0 >= self.num_actions() {
            return Err(FbError::shape(format!("action < {}", self.num_actions()), action.0));
        }
        Ok(self.forward_f_all(state, z)?.row(action.0).to_vec())
    }

    /// `B(g)` on raw goal features.
    pub fn forward_b(&self, goal: &[f64]) -> Result<Vec<f64>> {
        self.b_net.forward(goal)
    }

    pub fn forward_b_batch(&self, goals: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.b_net.forward_batch(goals)
    }

    /// `B(φ(s))`.
    pub fn backward_state(&self, state: &State) -> Vec<f64> {
        let x = self.b_inputs(std::slice::from_ref(state));
        self.b_net
            .forward_batch(x.view())
            .expect("goal features match B input")
            .into_raw_vec_and_offset()
            .0
    }

    /// `Q(s, ·) = F(s, ·, z)ᵀ z`; the z fed to F is preprocessed, the outer
    /// one is not.
    pub fn q_values(&self, state: &State, z: &[f64]) -> Result<Vec<f64>> {
        let f = self.forward_f_all(state, z)?;
        Ok(f.rows().into_iter().map(|row| dot(row.as_slice().unwrap(), z)).collect())
    }

    pub fn q_estimate(&self, state: &State, action: Action, z: &[f64]) -> Result<f64> {
        Ok(dot(&self.forward_f(state, action, z)?, z))
    }

    /// Q-values for many states under one task vector, `states × |A|`.
    pub fn q_values_batch(&self, states: &[State], z: &[f64]) -> Result<Array2<f64>> {
        self.q_values_batch_with(&self.f_net, states, z)
    }

    /// Same with the target F network (the softmax of the training loss).
    pub fn target_q_values_batch(&self, states: &[State], z: &[f64]) -> Result<Array2<f64>> {
        self.q_values_batch_with(self.f_target.net(), states, z)
    }

    fn q_values_batch_with(&self, net: &DenseNet, states: &[State], z: &[f64]) -> Result<Array2<f64>> {
        let zs = vec![z; states.len()];
        let x = self.f_inputs(states, &zs)?;
        let out = net.forward_batch(x.view())?;
        let a = self.num_actions();
        let mut q = Array2::zeros((states.len(), a));
        for i in 0..states.len() {
            for act in 0..a {
                let block = &out.row(i).to_slice().unwrap()[act * self.d..(act + 1) * self.d];
                q[[i, act]] = dot(block, z);
            }
        }
        Ok(q)
    }

    /// Evaluation policy action at `state`.
    pub fn act<R: Rng + ?Sized>(&self, state: &State, spec: &PolicySpec, rng: &mut R) -> Result<Action> {
        spec.kind.validate()?;
        let q = self.q_values(state, spec.z.as_slice())?;
        Ok(spec.kind.sample(&q, rng))
    }

    /// Serialize to the binary model format (see [`FbModel::write_to`]).
    pub fn save(&self, path: impl AsRef<Path>, config_echo: &str) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes, config_echo)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Layout: magic `FBRM`, u32 version, u32-length-prefixed environment
    /// id, u32 d, u32 |A|, F layer sizes and B layer sizes (u32 count then
    /// u32 each), then the parameters of F, B, F-target and B-target as
    /// little-endian f64 in declaration order, then the u32-length-prefixed
    /// training configuration text. All integers little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W, config_echo: &str) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        write_u32(w, MODEL_VERSION)?;
        write_str(w, &self.env.id().to_string())?;
        write_u32(w, self.d as u32)?;
        write_u32(w, self.num_actions() as u32)?;
        for net in [&self.f_net, &self.b_net] {
            let sizes = net.sizes();
            write_u32(w, sizes.len() as u32)?;
            for s in sizes {
                write_u32(w, s as u32)?;
            }
        }
        self.f_net.write_params(w)?;
        self.b_net.write_params(w)?;
        self.f_target.net().write_params(w)?;
        self.b_target.net().write_params(w)?;
        write_str(w, config_echo)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, String)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(FbError::Format("not an FB model file".into()));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(FbError::Format(format!("unsupported model version {version}")));
        }
        let env_id: EnvId = read_str(r)?.parse()?;
        let env = Env::from_id(env_id);
        let d = read_u32(r)? as usize;
        let num_actions = read_u32(r)? as usize;
        if num_actions != env.num_actions() {
            return Err(FbError::Format(format!(
                "model has {num_actions} actions, environment {env_id} has {}",
                env.num_actions()
            )));
        }
        let mut sizes = Vec::new();
        for _ in 0..2 {
            let n = read_u32(r)? as usize;
            if !(2..=64).contains(&n) {
                return Err(FbError::Format(format!("bad layer count {n}")));
            }
            let s: Vec<usize> = (0..n).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<_>>()?;
            sizes.push(s);
        }
        let f_net = DenseNet::read_params(&sizes[0], r)?;
        let b_net = DenseNet::read_params(&sizes[1], r)?;
        let f_target = DenseNet::read_params(&sizes[0], r)?;
        let b_target = DenseNet::read_params(&sizes[1], r)?;
        let echo = read_str(r)?;
        let mut model = FbModel::from_nets(env, f_net, b_net)?;
        if model.d != d {
            return Err(FbError::Format(format!("header d = {d}, B outputs {}", model.d)));
        }
        model.f_target = TargetCopy::of(&f_target);
        model.b_target = TargetCopy::of(&b_target);
        Ok((model, echo))
    }
}

impl BackwardMap for FbModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn backward(&self, state: &State, _action: Action) -> Result<Vec<f64>> {
        if !self.env.is_valid(state) {
            return Err(FbError::Format(format!("state {state:?} is not valid for {}", self.env.id())));
        }
        Ok(self.backward_state(state))
    }

    fn backward_batch(&self, pairs: &[(State, Action)]) -> Result<Array2<f64>> {
        let states: Vec<State> = pairs.iter().map(|p| p.0).collect();
        self.b_net.forward_batch(self.b_inputs(&states).view())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MODEL_MAGIC: &[u8; 4] = b"FBRM";
const MODEL_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| FbError::Format("invalid utf-8 string".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn small_model(seed: u64) -> FbModel {
        let mut rng = RandomStream::new(seed);
        FbModel::new(
            Env::from_id(EnvId::Cycle(5)),
            &FbArch::new(4, &[8, 8]),
            &mut rng,
        )
    }

    #[test]
    fn z_formula() {
        assert_eq!(z_from_parts(&[0.3, -1.0, 2.0], 0.0).0, vec![0.0, 0.0, 0.0]);
        assert_eq!(z_from_parts(&[1.0, 0.0, 0.0, 0.0], 0.5).0, vec![1.0, 0.0, 0.0, 0.0]);
        let mut rng = RandomStream::new(1);
        let z = sample_z(7, &mut rng);
        assert_eq!(z.dim(), 7);
        assert!(z.is_finite());
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess_z(&[0.0; 4]), vec![0.0; 4]);
        // ‖z‖² = d → z / √2
        let z = [1.0, 1.0, 1.0, 1.0];
        for v in preprocess_z(&z) {
            assert!((v - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        }
        let huge = [1e200, -1e200];
        let p = preprocess_z(&huge);
        assert!((norm(&p) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0, -100.0], 0.7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = softmax(&[1e308, -1e308], 1.0);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn f_is_pure_and_sliced() {
        let m = small_model(2);
        let s = State::Cell(3);
        let z = [0.5, -1.0, 0.25, 2.0];
        let all = m.forward_f_all(&s, &z).unwrap();
        for a in 0..3 {
            let fa = m.forward_f(&s, Action(a), &z).unwrap();
            assert_eq!(fa, all.row(a).to_vec());
            assert_eq!(fa, m.forward_f(&s, Action(a), &z).unwrap());
        }
        assert!(m.forward_f(&s, Action(3), &z).is_err());
        assert!(m.forward_f(&s, Action(0), &z[..3]).is_err());
    }

    #[test]
    fn zero_model_is_zero() {
        let m = FbModel::zeros(Env::from_id(EnvId::Cycle(5)), &FbArch::new(3, &[4]));
        let z = [1.0, 2.0, 3.0];
        assert_eq!(m.forward_f(&State::Cell(1), Action(2), &z).unwrap(), vec![0.0; 3]);
        assert_eq!(m.backward_state(&State::Cell(1)), vec![0.0; 3]);
    }

    #[test]
    fn b_batch_matches_single() {
        let m = small_model(3);
        let pairs: Vec<(State, Action)> = (0..5).map(|c| (State::Cell(c), Action(c % 3))).collect();
        let batch = m.backward_batch(&pairs).unwrap();
        for (i, (s, a)) in pairs.iter().enumerate() {
            let single = m.backward(s, *a).unwrap();
            for (x, y) in batch.row(i).iter().zip(&single) {
                assert!((x - y).abs() < 1e-14);
            }
            let g = m.env().featurize(s);
            assert_eq!(m.forward_b(&g).unwrap(), single);
        }
    }

    #[test]
    fn q_of_zero_task_is_zero() {
        let m = small_model(4);
        let z = [0.0; 4];
        for a in 0..3 {
            assert_eq!(m.q_estimate(&State::Cell(2), Action(a), &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn q_batch_matches_single() {
        let m = small_model(5);
        let z = [0.3, -0.2, 1.1, 0.7];
        let states: Vec<State> = (0..5).map(State::Cell).collect();
        let q = m.q_values_batch(&states, &z).unwrap();
        for (i, s) in states.iter().enumerate() {
            let qs = m.q_values(s, &z).unwrap();
            for a in 0..3 {
                assert!((q[[i, a]] - qs[a]).abs() < 1e-13);
                assert!((m.q_estimate(s, Action(a), &z).unwrap() - qs[a]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn greedy_tie_takes_first_action() {
        let m = FbModel::zeros(Env::from_id(EnvId::Cycle(5)), &FbArch::new(2, &[3]));
        let mut rng = RandomStream::new(0);
        let spec = PolicySpec {
            kind: PolicyKind::Greedy,
            z: TaskVector(vec![1.0, 1.0]),
        };
        assert_eq!(m.act(&State::Cell(0), &spec, &mut rng).unwrap(), Action(0));
        let bad = PolicySpec {
            kind: PolicyKind::Boltzmann { tau: 0.0 },
            z: TaskVector(vec![1.0, 1.0]),
        };
        assert!(m.act(&State::Cell(0), &bad, &mut rng).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let mut m = small_model(6);
        let mut rng = RandomStream::new(9);
        m.f_target = TargetCopy::of(&DenseNet::new(&m.f_net.sizes(), &mut rng));
        let mut bytes = Vec::new();
        m.write_to(&mut bytes, "seed = 1\n").unwrap();
        let (back, echo) = FbModel::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(echo, "seed = 1\n");
        let mut again = Vec::new();
        back.write_to(&mut again, &echo).unwrap();
        assert_eq!(again, bytes);
        bytes[0] = b'X';
        assert!(FbModel::read_from(&mut bytes.as_slice()).is_err());
    }
}
