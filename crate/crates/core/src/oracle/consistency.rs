use nalgebra::DMatrix;

use crate::envs::EnvDynamics;
use crate::error::{FbError, Result};
use crate::oracle::{check_rho, successor_measure_exact, TabularPolicy};

/// Residuals of the successor/predecessor feature identities at a fixed `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    /// `‖F Cov B − M B‖_F / ‖M B‖_F`.
    pub successor_residual: f64,
    /// `‖B Cov F − diag(1/ρ) Mᵀ diag(ρ) F‖_F` relative to the second term.
    pub predecessor_residual: f64,
    pub rank_cov_b: usize,
    pub rank_cov_f: usize,
}

impl ConsistencyReport {
    pub fn max_residual(&self) -> f64 {
        self.successor_residual.max(self.predecessor_residual)
    }
}

fn relative(residual: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.norm();
    if scale > 0.0 {
        residual.norm() / scale
    } else {
        residual.norm()
    }
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    let tol = top * 1e-10 * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Check whether tabular `F` (one row per pair, for the policy `policy`) and
/// `B` are successor features of each other's duals under ρ:
///
/// * `Cov B · F(s, a) = Σ_t γ^t E[B(s_t, a_t) | s, a]`
/// * `Cov F · B(s', a') = Σ_t γ^t E_ρ[P_t(s', a' | s, a)/ρ(s', a') F(s, a)]`
///
/// Both sides are computed by matrix algebra with the exact successor
/// measure. Covariances are never inverted, so singular ones are fine; their
/// ranks are reported alongside.
pub fn succ_pred_consistency(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    dynamics: &EnvDynamics,
    policy: &TabularPolicy,
    gamma: f64,
    rho: &[f64],
) -> Result<ConsistencyReport> {
    let n = dynamics.num_pairs();
    check_rho(rho, n)?;
    if f.nrows() != n || b.nrows() != n {
        return Err(FbError::shape(format!("{n} rows"), format!("F {}, B {}", f.nrows(), b.nrows())));
    }
    if f.ncols() != b.ncols() {
        return Err(FbError::shape(format!("F width {}", f.ncols()), format!("B width {}", b.ncols())));
    }
    let m = successor_measure_exact(dynamics, policy, gamma)?.m;
    let rho_diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(rho));
    let cov_b = b.transpose() * &rho_diag * b;
    let cov_f = f.transpose() * &rho_diag * f;

    let succ_rhs = &m * b;
    let succ = f * &cov_b - &succ_rhs;

    let mut pred_rhs = m.transpose() * &rho_diag * f;
    for (i, mut row) in pred_rhs.row_iter_mut().enumerate() {
        row /= rho[i];
    }
    let pred = b * &cov_f - &pred_rhs;

    Ok(ConsistencyReport {
        successor_residual: relative(&succ, &succ_rhs),
        predecessor_residual: relative(&pred, &pred_rhs),
        rank_cov_b: rank(&cov_b),
        rank_cov_f: rank(&cov_f),
    })
}
