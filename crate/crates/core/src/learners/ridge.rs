use crate::encoder::Mat;
use crate::error::{Error, Result};

use super::linalg::guarded_inverse;
use super::{check_grad_shape, LearnerConfig, LearnerGradients, LearnerOutput, SolverState};

#[derive(Debug, Clone)]
pub struct RidgeState {
    support: Mat,
    query: Mat,
    /// `(X X^T + lambda I)^-1`.
    kernel_inv: Mat,
    /// Dual coefficients `A = K^-1 Y`.
    dual: Mat,
    /// Primal weights `W = X^T A`, `d x n_way`.
    weights: Mat,
    raw: Mat,
    temperature: f64,
}

impl RidgeState {
    pub fn weights(&self) -> &Mat {
        &self.weights
    }
}

/// Ridge regression onto one-hot targets solved in the dual (Woodbury) form:
/// `W = X^T (X X^T + lambda I)^-1 Y`, `logits = t * Q W`.
pub fn ridge_forward(support: &Mat, targets: &Mat, query: &Mat, cfg: &LearnerConfig) -> Result<LearnerOutput> {
    if support.nrows() == 0 || support.nrows() != targets.nrows() {
        return Err(Error::Shape(format!(
            "{} support rows, {} target rows",
            support.nrows(),
            targets.nrows()
        )));
    }
    if support.ncols() != query.ncols() {
        return Err(Error::Shape("support and query dims differ".into()));
    }
    if let Some(k) = (0..targets.ncols()).find(|&k| targets.column(k).iter().all(|v| *v == 0.0)) {
        return Err(Error::InvalidArgument(format!("class {k} has no support examples")));
    }
    let s = support.nrows();
    let mut kernel = support * support.transpose();
    for i in 0..s {
        kernel[(i, i)] += cfg.ridge_lambda;
    }
    let kernel_inv = guarded_inverse(&kernel)?;
    let dual = &kernel_inv * targets;
    let weights = support.transpose() * &dual;
    let raw = query * &weights;
    let logits = &raw * cfg.temperature;
    Ok(LearnerOutput {
        logits,
        state: SolverState::Ridge(RidgeState {
            support: support.clone(),
            query: query.clone(),
            kernel_inv,
            dual,
            weights,
            raw,
            temperature: cfg.temperature,
        }),
    })
}

pub fn ridge_backward(state: &RidgeState, grad_logits: &Mat) -> Result<LearnerGradients> {
    check_grad_shape(grad_logits, state.query.nrows(), state.weights.ncols())?;
    let g = grad_logits * state.temperature;
    let grad_query = &g * state.weights.transpose();
    let grad_w = state.query.transpose() * &g;
    // W = X^T A
    let mut grad_support = &state.dual * grad_w.transpose();
    let grad_dual = &state.support * &grad_w;
    // A = K^-1 Y
    let grad_kernel = -(&state.kernel_inv * grad_dual) * state.dual.transpose();
    // K = X X^T + lambda I
    grad_support += (&grad_kernel + grad_kernel.transpose()) * &state.support;
    Ok(LearnerGradients {
        support: grad_support,
        query: grad_query,
        temperature: grad_logits.component_mul(&state.raw).sum(),
    })
}
