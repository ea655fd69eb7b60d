//! Per-episode base learners. Each maps support embeddings (with local labels)
//! and query embeddings to query logits, and back-propagates logit gradients
//! to every support and query coordinate and to the shared temperature.

mod linalg;
mod proto;
mod ridge;
mod simplex;
mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::Mat;
use crate::error::{Error, Result};

pub use linalg::{guarded_inverse, RCOND_MIN};
pub use proto::{proto_backward, proto_forward, ProtoState};
pub use ridge::{ridge_backward, ridge_forward, RidgeState};
pub use simplex::project_simplex;
pub use svm::{svm_backward, svm_dual_objective, svm_forward, svm_solve, SvmState, SvmTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Proto,
    Ridge,
    Svm,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Proto, LearnerKind::Ridge, LearnerKind::Svm];
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Proto => "proto",
            LearnerKind::Ridge => "ridge",
            LearnerKind::Svm => "svm",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proto" | "protonet" => Ok(LearnerKind::Proto),
            "ridge" | "r2d2" => Ok(LearnerKind::Ridge),
            "svm" | "metaoptnet" => Ok(LearnerKind::Svm),
            _ => Err(Error::InvalidArgument(format!("unknown learner `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Multiplies logits; learned alongside the encoder.
    pub temperature: f64,
    pub ridge_lambda: f64,
    #[serde(alias = "svm_C")]
    pub svm_c: f64,
    pub svm_max_iter: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Proto,
            temperature: 1.0,
            ridge_lambda: 50.0,
            svm_c: 0.1,
            svm_max_iter: 15,
        }
    }
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("temperature must be finite and positive, got {}", self.temperature));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return bad(format!("ridge_lambda must be >= 0, got {}", self.ridge_lambda));
        }
        if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
            return bad(format!("svm_c must be > 0, got {}", self.svm_c));
        }
        if self.svm_max_iter == 0 {
            return bad("svm_max_iter must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SolverState {
    Proto(ProtoState),
    Ridge(RidgeState),
    Svm(SvmState),
}

impl SolverState {
    pub fn kind(&self) -> LearnerKind {
        match self {
            SolverState::Proto(_) => LearnerKind::Proto,
            SolverState::Ridge(_) => LearnerKind::Ridge,
            SolverState::Svm(_) => LearnerKind::Svm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerOutput {
    /// `n_query x n_way`.
    pub logits: Mat,
    pub state: SolverState,
}

#[derive(Debug, Clone)]
pub struct LearnerGradients {
    pub support: Mat,
    pub query: Mat,
    pub temperature: f64,
}

pub(crate) fn check_inputs(support: &Mat, labels: &[usize], n_way: usize, query: &Mat) -> Result<Vec<usize>> {
    if support.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} support rows, {} labels", support.nrows(), labels.len())));
    }
    if support.ncols() != query.ncols() {
        return Err(Error::Shape(format!(
            "support dim {} differs from query dim {}",
            support.ncols(),
            query.ncols()
        )));
    }
    let mut counts = vec![0usize; n_way];
    for &y in labels {
        if y >= n_way {
            return Err(Error::Shape(format!("label {y} out of range for {n_way}-way")));
        }
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("class {k} has no support examples")));
    }
    Ok(counts)
}

pub(crate) fn one_hot(labels: &[usize], n_way: usize) -> Mat {
    let mut y = Mat::zeros(labels.len(), n_way);
    for (i, &k) in labels.iter().enumerate() {
        y[(i, k)] = 1.0;
    }
    y
}

/// Runs the learner selected by `cfg.kind`.
pub fn forward(cfg: &LearnerConfig, support: &Mat, labels: &[usize], n_way: usize, query: &Mat) -> Result<LearnerOutput> {
    match cfg.kind {
        LearnerKind::Proto => proto_forward(support, labels, n_way, query, cfg),
        LearnerKind::Ridge => ridge_forward(support, &one_hot(labels, n_way), query, cfg),
        LearnerKind::Svm => svm_forward(support, labels, n_way, query, cfg),
    }
}

pub fn backward(kind: LearnerKind, state: &SolverState, grad_logits: &Mat) -> Result<LearnerGradients> {
    match (kind, state) {
        (LearnerKind::Proto, SolverState::Proto(s)) => proto_backward(s, grad_logits),
        (LearnerKind::Ridge, SolverState::Ridge(s)) => ridge_backward(s, grad_logits),
        (LearnerKind::Svm, SolverState::Svm(s)) => svm_backward(s, grad_logits),
        (kind, state) => Err(Error::InvalidArgument(format!(
            "{kind} backward given {} solver state",
            state.kind()
        ))),
    }
}

pub(crate) fn check_grad_shape(grad: &Mat, rows: usize, cols: usize) -> Result<()> {
    if grad.shape() != (rows, cols) {
        return Err(Error::Shape(format!(
            "logit gradient is {:?}, expected ({rows}, {cols})",
            grad.shape()
        )));
    }
    Ok(())
}
