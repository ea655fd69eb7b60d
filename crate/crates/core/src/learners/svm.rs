//! Crammer-Singer multi-class linear SVM, solved in the dual by a fixed number
//! of projected-gradient ascent steps and differentiated by unrolling them.
//!
//! Dual variables: one row `alpha_i` per support point with `alpha_i <= C e_{y_i}`
//! and `sum_k alpha_i[k] = 0`. Writing `beta_i = C e_{y_i} - alpha_i` turns each
//! row constraint into the scaled simplex `{beta >= 0, sum beta = C}`. The dual
//! objective is `sum_i alpha_i[y_i] - 1/2 tr(alpha^T K alpha)` with `K = X X^T`,
//! and class weights are `w_k = sum_i alpha_i[k] x_i`.

use crate::encoder::Mat;
use crate::error::{Error, Result};

use super::simplex::project_simplex;
use super::{check_grad_shape, check_inputs, one_hot, LearnerConfig, LearnerGradients, LearnerOutput, SolverState};

/// Iterates of the dual ascent and the active sets of each projection.
#[derive(Debug, Clone)]
pub struct SvmTrajectory {
    pub gram: Mat,
    pub step: f64,
    /// `alphas[0]` is the zero start; `alphas[t]` follows iteration `t`.
    pub alphas: Vec<Mat>,
    /// `masks[t - 1]` holds the simplex support used to produce `alphas[t]`.
    pub masks: Vec<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone)]
pub struct SvmState {
    support: Mat,
    query: Mat,
    targets: Mat,
    trajectory: SvmTrajectory,
    /// `n_way x d`.
    weights: Mat,
    raw: Mat,
    temperature: f64,
}

impl SvmState {
    pub fn trajectory(&self) -> &SvmTrajectory {
        &self.trajectory
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }
}

pub fn svm_dual_objective(gram: &Mat, targets: &Mat, alpha: &Mat) -> f64 {
    alpha.component_mul(targets).sum() - 0.5 * (alpha.transpose() * gram * alpha).trace()
}

/// Runs `iterations` projected-gradient steps from `alpha = 0` with step
/// `1 / trace(K)`, an upper bound on the largest Gram eigenvalue.
pub fn svm_solve(support: &Mat, labels: &[usize], n_way: usize, c: f64, iterations: usize) -> Result<SvmTrajectory> {
    let s = support.nrows();
    let gram = support * support.transpose();
    let targets = one_hot(labels, n_way);
    let trace = gram.trace();
    let step = if trace > 0.0 { 1.0 / trace } else { 1.0 };

    let mut alphas = Vec::with_capacity(iterations + 1);
    let mut masks = Vec::with_capacity(iterations);
    alphas.push(Mat::zeros(s, n_way));
    for it in 1..=iterations {
        let alpha = alphas.last().unwrap();
        let v = alpha + (&targets - &gram * alpha) * step;
        let mut next = Mat::zeros(s, n_way);
        let mut mask = Vec::with_capacity(s);
        for i in 0..s {
            let y = labels[i];
            let z: Vec<f64> = (0..n_way)
                .map(|k| if k == y { c - v[(i, k)] } else { -v[(i, k)] })
                .collect();
            let (p, support_set) = project_simplex(&z, c);
            for k in 0..n_way {
                next[(i, k)] = if k == y { c - p[k] } else { -p[k] };
            }
            mask.push(support_set);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { iteration: it });
        }
        alphas.push(next);
        masks.push(mask);
    }
    Ok(SvmTrajectory {
        gram,
        step,
        alphas,
        masks,
    })
}

pub fn svm_forward(
    support: &Mat,
    labels: &[usize],
    n_way: usize,
    query: &Mat,
    cfg: &LearnerConfig,
) -> Result<LearnerOutput> {
    check_inputs(support, labels, n_way, query)?;
    if n_way < 2 {
        return Err(Error::InvalidArgument("svm needs at least two classes".into()));
    }
    let trajectory = svm_solve(support, labels, n_way, cfg.svm_c, cfg.svm_max_iter)?;
    let weights = trajectory.alphas.last().unwrap().transpose() * support;
    let raw = query * weights.transpose();
    let logits = &raw * cfg.temperature;
    Ok(LearnerOutput {
        logits,
        state: SolverState::Svm(SvmState {
            support: support.clone(),
            query: query.clone(),
            targets: one_hot(labels, n_way),
            trajectory,
            weights,
            raw,
            temperature: cfg.temperature,
        }),
    })
}

/// Row-wise product with the projection Jacobian `diag(m) - m m^T / |m|`.
fn project_back(grad: &Mat, mask: &[Vec<bool>]) -> Mat {
    let mut out = Mat::zeros(grad.nrows(), grad.ncols());
    for (i, row_mask) in mask.iter().enumerate() {
        let active = row_mask.iter().filter(|m| **m).count() as f64;
        let mean = row_mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(k, _)| grad[(i, k)])
            .sum::<f64>()
            / active;
        for (k, on) in row_mask.iter().enumerate() {
            if *on {
                out[(i, k)] = grad[(i, k)] - mean;
            }
        }
    }
    out
}

pub fn svm_backward(state: &SvmState, grad_logits: &Mat) -> Result<LearnerGradients> {
    check_grad_shape(grad_logits, state.query.nrows(), state.weights.nrows())?;
    let traj = &state.trajectory;
    let eta = traj.step;
    let g = grad_logits * state.temperature;

    // raw = Q W^T, W = alpha_T^T X
    let grad_query = &g * &state.weights;
    let grad_w = g.transpose() * &state.query;
    let alpha_last = traj.alphas.last().unwrap();
    let mut grad_support = alpha_last * &grad_w;
    let mut grad_alpha = &state.support * grad_w.transpose();

    let s = state.support.nrows();
    let mut grad_gram = Mat::zeros(s, s);
    let mut grad_step = 0.0;
    for t in (1..traj.alphas.len()).rev() {
        let prev = &traj.alphas[t - 1];
        let grad_v = project_back(&grad_alpha, &traj.masks[t - 1]);
        let residual = &state.targets - &traj.gram * prev;
        grad_step += grad_v.component_mul(&residual).sum();
        grad_gram -= (&grad_v * prev.transpose()) * eta;
        grad_alpha = &grad_v - (&traj.gram * &grad_v) * eta;
    }
    // step = 1 / trace(K)
    if traj.gram.trace() > 0.0 {
        for i in 0..s {
            grad_gram[(i, i)] -= eta * eta * grad_step;
        }
    }
    grad_support += (&grad_gram + grad_gram.transpose()) * &state.support;

    Ok(LearnerGradients {
        support: grad_support,
        query: grad_query,
        temperature: grad_logits.component_mul(&state.raw).sum(),
    })
}
