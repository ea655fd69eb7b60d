//! Self-supervised regression heads that reconstruct per-utterance frame
//! statistics from the embedding.

use std::str::FromStr;

use rand::Rng;

use crate::dataset::{frame_logvar, mean_pool, FeatureStore, FrameMatrix};
use crate::encoder::{glorot_bound, Mat, Vector};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerKind {
    /// Mean frame vector.
    FrameMean,
    /// Elementwise log-variance across frames.
    FrameLogvar,
}

impl WorkerKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkerKind::FrameMean => "frame_mean",
            WorkerKind::FrameLogvar => "frame_logvar",
        }
    }

    pub fn target(self, frames: &FrameMatrix) -> Result<Vec<f64>> {
        match self {
            WorkerKind::FrameMean => mean_pool(frames),
            WorkerKind::FrameLogvar => frame_logvar(frames),
        }
    }

    /// Precomputed target for manifest record `record`.
    pub fn stored_target(self, store: &FeatureStore, record: usize) -> &[f64] {
        match self {
            WorkerKind::FrameMean => &store.pooled[record],
            WorkerKind::FrameLogvar => &store.logvar[record],
        }
    }
}

impl FromStr for WorkerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame_mean" => Ok(WorkerKind::FrameMean),
            "frame_logvar" => Ok(WorkerKind::FrameLogvar),
            other => Err(Error::UnknownWorker(other.to_string())),
        }
    }
}

/// Linear regressor `target ~ weight * embedding + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Worker {
    pub kind: WorkerKind,
    pub weight: Mat,
    pub bias: Vector,
}

impl Worker {
    pub fn target_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkerSet {
    pub workers: Vec<Worker>,
}

impl WorkerSet {
    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

pub fn make_workers(names: &[impl AsRef<str>], feature_dim: usize, embedding_dim: usize, seed: u64) -> Result<WorkerSet> {
    let mut rng = rng::stream(seed, rng::domain::WORKER_INIT);
    let a = glorot_bound(embedding_dim, feature_dim);
    let workers = names
        .iter()
        .map(|n| {
            let kind: WorkerKind = n.as_ref().parse()?;
            let mut weight = Mat::zeros(feature_dim, embedding_dim);
            for i in 0..feature_dim {
                for j in 0..embedding_dim {
                    weight[(i, j)] = rng.random_range(-a..a);
                }
            }
            Ok(Worker {
                kind,
                weight,
                bias: Vector::zeros(feature_dim),
            })
        })
        .collect::<Result<_>>()?;
    Ok(WorkerSet { workers })
}

#[derive(Debug, Clone)]
pub(crate) struct WorkerGradients {
    pub weights: Vec<(Mat, Vector)>,
    pub embeddings: Mat,
    pub loss: f64,
}

/// Sum over workers of `scale * sum_u mean_j (pred_uj - target_uj)^2` for the
/// given embeddings, plus gradients.
pub(crate) fn worker_loss(
    set: &WorkerSet,
    embeddings: &Mat,
    records: &[usize],
    store: &FeatureStore,
    scale: f64,
) -> WorkerGradients {
    let mut grad_emb = Mat::zeros(embeddings.nrows(), embeddings.ncols());
    let mut weights = Vec::with_capacity(set.workers.len());
    let mut loss = 0.0;
    for w in &set.workers {
        let dim = w.target_dim() as f64;
        let mut gw = Mat::zeros(w.weight.nrows(), w.weight.ncols());
        let mut gb = Vector::zeros(w.bias.len());
        for (u, &rec) in records.iter().enumerate() {
            let e = embeddings.row(u).transpose();
            let target = w.kind.stored_target(store, rec);
            let mut resid = &w.weight * &e + &w.bias;
            for (r, t) in resid.iter_mut().zip(target) {
                *r -= t;
            }
            loss += scale * resid.norm_squared() / dim;
            let g = resid * (2.0 * scale / dim);
            gw += &g * e.transpose();
            gb += &g;
            let mut row = grad_emb.row_mut(u);
            row += (w.weight.transpose() * &g).transpose();
        }
        weights.push((gw, gb));
    }
    WorkerGradients {
        weights,
        embeddings: grad_emb,
        loss,
    }
}
