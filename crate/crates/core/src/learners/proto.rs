use crate::encoder::Mat;
use crate::error::Result;

use super::{check_grad_shape, check_inputs, LearnerConfig, LearnerGradients, LearnerOutput, SolverState};

#[derive(Debug, Clone)]
pub struct ProtoState {
    labels: Vec<usize>,
    counts: Vec<usize>,
    query: Mat,
    prototypes: Mat,
    /// Negative squared distances, before temperature.
    raw: Mat,
    temperature: f64,
}

impl ProtoState {
    pub fn prototypes(&self) -> &Mat {
        &self.prototypes
    }
}

/// Class centroids of the support set; `logit[i][k] = -t * |q_i - c_k|^2`.
pub fn proto_forward(
    support: &Mat,
    labels: &[usize],
    n_way: usize,
    query: &Mat,
    cfg: &LearnerConfig,
) -> Result<LearnerOutput> {
    let counts = check_inputs(support, labels, n_way, query)?;
    let d = support.ncols();
    let mut prototypes = Mat::zeros(n_way, d);
    for (i, &y) in labels.iter().enumerate() {
        let mut row = prototypes.row_mut(y);
        row += support.row(i);
    }
    for (k, &c) in counts.iter().enumerate() {
        prototypes.row_mut(k).unscale_mut(c as f64);
    }
    let raw = Mat::from_fn(query.nrows(), n_way, |i, k| -(query.row(i) - prototypes.row(k)).norm_squared());
    let logits = &raw * cfg.temperature;
    Ok(LearnerOutput {
        logits,
        state: SolverState::Proto(ProtoState {
            labels: labels.to_vec(),
            counts,
            query: query.clone(),
            prototypes,
            raw,
            temperature: cfg.temperature,
        }),
    })
}

pub fn proto_backward(state: &ProtoState, grad_logits: &Mat) -> Result<LearnerGradients> {
    let n_way = state.prototypes.nrows();
    check_grad_shape(grad_logits, state.query.nrows(), n_way)?;
    let t = state.temperature;
    let d = state.query.ncols();
    let mut grad_query = Mat::zeros(state.query.nrows(), d);
    let mut grad_proto = Mat::zeros(n_way, d);
    for i in 0..state.query.nrows() {
        for k in 0..n_way {
            let g = t * grad_logits[(i, k)];
            if g == 0.0 {
                continue;
            }
            let diff = state.query.row(i) - state.prototypes.row(k);
            let mut gq = grad_query.row_mut(i);
            gq -= &diff * (2.0 * g);
            let mut gp = grad_proto.row_mut(k);
            gp += &diff * (2.0 * g);
        }
    }
    let mut grad_support = Mat::zeros(state.labels.len(), d);
    for (j, &y) in state.labels.iter().enumerate() {
        grad_support
            .row_mut(j)
            .copy_from(&(grad_proto.row(y) / state.counts[y] as f64));
    }
    Ok(LearnerGradients {
        support: grad_support,
        query: grad_query,
        temperature: grad_logits.component_mul(&state.raw).sum(),
    })
}
