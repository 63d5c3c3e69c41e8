use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::diffnet::{BlockSelect, Gradient};
use crate::envs::{Action, State};
use crate::error::{FbError, Result};
use crate::model::{dot, sample_z, softmax, FbModel, TaskVector};
use crate::replay::{ReplayBuffer, Transition};

/// FB loss and its gradients with respect to the three online embeddings.
#[derive(Clone, Debug)]
pub struct FbLossGrads {
    pub loss: f64,
    pub d_fm: Array2<f64>,
    pub d_bt: Array2<f64>,
    pub d_bd: Array2<f64>,
}

/// The FB loss on embedding matrices (one row per batch element):
///
/// `L = ‖Fm Btᵀ − γ Ftgt Btgtᵀ‖² / (2b²) − (1/b) Σ_i Fm_i · Bd_i`
///
/// `fm = F(s_i, a_i, z_i)`, `ftgt` the policy-averaged target F at
/// `s_{i+1}`, `bt`/`btgt` the online/target B of the target pairs and `bd`
/// the online B of `(s_i, a_i)`. `ftgt` and `btgt` carry no gradient.
pub fn fb_loss_matrices(
    fm: ArrayView2<f64>,
    ftgt: ArrayView2<f64>,
    bt: ArrayView2<f64>,
    btgt: ArrayView2<f64>,
    bd: ArrayView2<f64>,
    gamma: f64,
) -> Result<FbLossGrads> {
    let b = fm.nrows();
    for (name, m) in [("F target", &ftgt), ("B targets", &bt), ("B target net", &btgt), ("B diagonal", &bd)] {
        if m.dim() != fm.dim() {
            return Err(FbError::BatchMismatch(format!(
                "{name} is {:?}, F is {:?}",
                m.dim(),
                fm.dim()
            )));
        }
    }
    if b == 0 {
        return Ok(FbLossGrads {
            loss: 0.0,
            d_fm: fm.to_owned(),
            d_bt: bt.to_owned(),
            d_bd: bd.to_owned(),
        });
    }
    let bf = b as f64;
    let mut delta = fm.dot(&bt.t());
    delta.scaled_add(-gamma, &ftgt.dot(&btgt.t()));
    let diag: f64 = fm.rows().into_iter().zip(bd.rows()).map(|(f, g)| f.dot(&g)).sum();
    let loss = delta.iter().map(|v| v * v).sum::<f64>() / (2.0 * bf * bf) - diag / bf;

    let mut d_fm = delta.dot(&bt) / (bf * bf);
    d_fm.scaled_add(-1.0 / bf, &bd);
    let d_bt = delta.t().dot(&fm) / (bf * bf);
    let d_bd = fm.to_owned() * (-1.0 / bf);
    Ok(FbLossGrads { loss, d_fm, d_bt, d_bd })
}

/// Orthonormality regularizer on B with its stop-gradient factors; returns
/// the loss value and the gradient with respect to `bd` (the only factor
/// that is not stopped):
///
/// `L = (1/b²) Σ_ij (Bd_i · Bt_j)² − (1/b) Σ_i ‖Bd_i‖²`,
/// `∂L/∂Bd_i = (1/b²) Σ_j (Bd_i · Bt_j) Bt_j − Bd_i / b`.
pub fn ortho_reg_matrices(bd: ArrayView2<f64>, bt: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if bd.dim() != bt.dim() {
        return Err(FbError::BatchMismatch(format!("{:?} vs {:?}", bd.dim(), bt.dim())));
    }
    let b = bd.nrows();
    if b == 0 {
        return Ok((0.0, bd.to_owned()));
    }
    let bf = b as f64;
    let c = bd.dot(&bt.t());
    let norms: f64 = bd.iter().map(|v| v * v).sum();
    let loss = c.iter().map(|v| v * v).sum::<f64>() / (bf * bf) - norms / bf;
    let mut grad = c.dot(&bt) / (bf * bf);
    grad.scaled_add(-1.0 / bf, &bd);
    Ok((loss, grad))
}

/// One training mini-batch: transitions, independent target pairs and
/// independent task vectors, all of the same size.
#[derive(Clone, Debug)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    pub targets: Vec<(State, Action)>,
    pub zs: Vec<TaskVector>,
}

impl Batch {
    pub fn sample<R: Rng + ?Sized>(buffer: &ReplayBuffer, b: usize, d: usize, rng: &mut R) -> Result<Self> {
        let transitions = buffer.sample_transitions(b, rng)?;
        let targets = buffer.sample_targets(b, rng)?;
        let zs = (0..b).map(|_| sample_z(d, rng)).collect();
        Ok(Batch { transitions, targets, zs })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.targets.len() != self.len() || self.zs.len() != self.len() {
            return Err(FbError::BatchMismatch(format!(
                "{} transitions, {} targets, {} task vectors",
                self.len(),
                self.targets.len(),
                self.zs.len()
            )));
        }
        Ok(())
    }
}

/// Losses of one update and the parameter gradients for F (on the FB loss)
/// and B (on the FB loss plus `λ_reg` times the regularizer).
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub fb_loss: f64,
    pub reg_loss: f64,
    pub f_grad: Gradient,
    pub b_grad: Gradient,
}

/// `Σ_a π(a) F_target(s_{i+1}, a, z_i)` with `π = softmax(F_targetᵀ z_i / τ)`
/// on the raw `z_i`.
fn policy_averaged_target(model: &FbModel, next: &[State], zs: &[&[f64]], tau: f64) -> Result<Array2<f64>> {
    let d = model.d();
    let na = model.num_actions();
    let x = model.f_inputs(next, zs)?;
    let all = model.f_target.net().forward_batch(x.view())?;
    let mut out = Array2::zeros((next.len(), d));
    for (i, z) in zs.iter().enumerate() {
        let row = all.row(i);
        let row = row.as_slice().expect("contiguous row");
        let logits: Vec<f64> = (0..na).map(|a| dot(&row[a * d..(a + 1) * d], z)).collect();
        let pi = softmax(&logits, tau);
        let mut o = out.row_mut(i);
        for (a, p) in pi.iter().enumerate() {
            o.scaled_add(*p, &ndarray::ArrayView1::from(&row[a * d..(a + 1) * d]));
        }
    }
    Ok(out)
}

/// Forward and backward pass of one update.
pub fn loss_and_gradients(
    model: &FbModel,
    batch: &Batch,
    gamma: f64,
    tau: f64,
    lambda_reg: f64,
) -> Result<StepOutput> {
    batch.check()?;
    let b = batch.len();
    let d = model.d();
    let states: Vec<State> = batch.transitions.iter().map(|t| t.state).collect();
    let next: Vec<State> = batch.transitions.iter().map(|t| t.next).collect();
    let actions: Vec<usize> = batch.transitions.iter().map(|t| t.action.0).collect();
    let zs: Vec<&[f64]> = batch.zs.iter().map(TaskVector::as_slice).collect();
    let goals: Vec<State> = batch.targets.iter().map(|p| p.0).collect();

    let f_cache = model.f_net.forward_cached(
        model.f_inputs(&states, &zs)?,
        Some(BlockSelect { width: d, blocks: actions }),
    )?;
    let ftgt = policy_averaged_target(model, &next, &zs, tau)?;

    // online B on the target pairs (rows 0..b) and on the transitions (b..2b)
    let b_in = concatenate![Axis(0), model.b_inputs(&goals), model.b_inputs(&states)];
    let b_cache = model.b_net.forward_cached(b_in, None)?;
    let b_out = b_cache.output();
    let (bt, bd) = (b_out.slice(s![..b, ..]), b_out.slice(s![b.., ..]));
    let btgt = model.b_target.net().forward_batch(model.b_inputs(&goals).view())?;

    let fb = fb_loss_matrices(f_cache.output().view(), ftgt.view(), bt, btgt.view(), bd, gamma)?;
    let (reg_loss, d_reg) = ortho_reg_matrices(bd, bt)?;

    let mut d_bd = fb.d_bd;
    d_bd.scaled_add(lambda_reg, &d_reg);
    let d_b = concatenate![Axis(0), fb.d_bt, d_bd];
    let f_grad = model.f_net.backward(&f_cache, fb.d_fm.view())?;
    let b_grad = model.b_net.backward(&b_cache, d_b.view())?;
    Ok(StepOutput {
        fb_loss: fb.loss,
        reg_loss,
        f_grad,
        b_grad,
    })
}

/// FB loss alone with its F and B gradients.
pub fn fb_loss(model: &FbModel, batch: &Batch, gamma: f64, tau: f64) -> Result<(f64, Gradient, Gradient)> {
    let out = loss_and_gradients(model, batch, gamma, tau, 0.0)?;
    Ok((out.fb_loss, out.f_grad, out.b_grad))
}

/// Regularizer alone: B on the transition states against B on the targets.
pub fn ortho_reg_loss(
    model: &FbModel,
    transitions: &[Transition],
    targets: &[(State, Action)],
) -> Result<(f64, Gradient)> {
    if transitions.len() != targets.len() {
        return Err(FbError::BatchMismatch(format!(
            "{} transitions vs {} targets",
            transitions.len(),
            targets.len()
        )));
    }
    let states: Vec<State> = transitions.iter().map(|t| t.state).collect();
    let goals: Vec<State> = targets.iter().map(|p| p.0).collect();
    let bt = model.b_net.forward_batch(model.b_inputs(&goals).view())?;
    let cache = model.b_net.forward_cached(model.b_inputs(&states), None)?;
    let (loss, d_bd) = ortho_reg_matrices(cache.output().view(), bt.view())?;
    Ok((loss, model.b_net.backward(&cache, d_bd.view())?))
}
