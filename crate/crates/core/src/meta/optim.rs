//! SGD with (Nesterov) momentum in the velocity form
//! `v <- mu v - lr g;  theta <- theta + mu v - lr g` (Nesterov) or
//! `theta <- theta + v` (classical). A zero learning rate leaves both the
//! parameters and the velocities untouched.

use crate::encoder::{Mat, Vector};

use super::train::{Model, ModelGradients};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
}

/// Smallest temperature the optimizer will leave behind.
pub const TEMPERATURE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub weight: Mat,
    pub bias: Vector,
    pub temperature: f64,
    pub workers: Vec<(Mat, Vector)>,
}

impl OptimizerState {
    pub fn zeros(model: &Model) -> Self {
        Self {
            weight: Mat::zeros(model.encoder.weight.nrows(), model.encoder.weight.ncols()),
            bias: Vector::zeros(model.encoder.bias.len()),
            temperature: 0.0,
            workers: model
                .workers
                .workers
                .iter()
                .map(|w| (Mat::zeros(w.weight.nrows(), w.weight.ncols()), Vector::zeros(w.bias.len())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite()) && self.temperature.is_finite()
    }
}

fn step_slice(param: &mut [f64], grad: &[f64], vel: &mut [f64], s: &SgdSettings, decay: bool) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
        let g = if decay { g + s.weight_decay * *p } else { g };
        *v = s.momentum * *v - s.lr * g;
        if s.nesterov {
            *p += s.momentum * *v - s.lr * g;
        } else {
            *p += *v;
        }
    }
}

/// One update. Weight decay applies to weight matrices only, not to biases
/// or the temperature. Worker tensors are touched only when `update_workers`.
pub(crate) fn apply(
    model: &mut Model,
    grads: &ModelGradients,
    state: &mut OptimizerState,
    s: &SgdSettings,
    update_workers: bool,
) {
    step_slice(
        model.encoder.weight.as_mut_slice(),
        grads.encoder.weight.as_slice(),
        state.weight.as_mut_slice(),
        s,
        true,
    );
    step_slice(
        model.encoder.bias.as_mut_slice(),
        grads.encoder.bias.as_slice(),
        state.bias.as_mut_slice(),
        s,
        false,
    );
    let mut t = [model.temperature];
    step_slice(&mut t, &[grads.temperature], std::slice::from_mut(&mut state.temperature), s, false);
    model.temperature = t[0].max(TEMPERATURE_FLOOR);
    if update_workers {
        for ((w, (gw, gb)), (vw, vb)) in model.workers.workers.iter_mut().zip(&grads.workers).zip(&mut state.workers) {
            step_slice(w.weight.as_mut_slice(), gw.as_slice(), vw.as_mut_slice(), s, true);
            step_slice(w.bias.as_mut_slice(), gb.as_slice(), vb.as_mut_slice(), s, false);
        }
    }
}
