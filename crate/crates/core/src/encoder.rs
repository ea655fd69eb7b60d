//! Trainable embedding head: per-frame affine projection followed by mean
//! pooling, computed pool-first since the two commute.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::{mean_pool, FeatureStore, FrameMatrix};
use crate::error::{Error, Result};
use crate::rng;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const DEFAULT_EMBEDDING_DIM: usize = 50;
pub const DEFAULT_FEATURE_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `embedding_dim x feature_dim`.
    pub weight: Mat,
    pub bias: Vector,
    /// Optional ReLU after the projection.
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub weight: Mat,
    pub bias: Vector,
}

impl EncoderGradients {
    pub fn zeros(params: &EncoderParams) -> Self {
        Self {
            weight: Mat::zeros(params.weight.nrows(), params.weight.ncols()),
            bias: Vector::zeros(params.bias.len()),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGradients) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }
}

/// Pooled inputs (one row per utterance), plus the ReLU mask when enabled.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pooled: Mat,
    active: Option<Mat>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.pooled.nrows()
    }
}

impl EncoderParams {
    pub fn feature_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.weight.nrows() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} embedding rows",
                self.bias.len(),
                self.weight.nrows()
            )));
        }
        if self.weight.iter().chain(self.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in encoder parameters".into(),
            });
        }
        Ok(())
    }
}

pub fn glorot_bound(feature_dim: usize, embedding_dim: usize) -> f64 {
    (6.0 / (feature_dim + embedding_dim) as f64).sqrt()
}

/// Glorot-uniform weights, zero bias.
pub fn init_encoder(feature_dim: usize, embedding_dim: usize, seed: u64) -> Result<EncoderParams> {
    if feature_dim == 0 || embedding_dim == 0 {
        return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
    }
    let a = glorot_bound(feature_dim, embedding_dim);
    let mut rng = rng::stream(seed, rng::domain::ENCODER_INIT);
    // row-major fill order, so the layout of the draw matches the checkpoint
    let mut weight = Mat::zeros(embedding_dim, feature_dim);
    for i in 0..embedding_dim {
        for j in 0..feature_dim {
            weight[(i, j)] = rng.random_range(-a..a);
        }
    }
    Ok(EncoderParams {
        weight,
        bias: Vector::zeros(embedding_dim),
        relu: false,
    })
}

/// Stacks pooled vectors of the given records into a `batch x feature_dim` matrix.
pub fn gather_pooled(store: &FeatureStore, records: impl IntoIterator<Item = usize>) -> Mat {
    let rows: Vec<&Vec<f64>> = records.into_iter().map(|i| &store.pooled[i]).collect();
    Mat::from_fn(rows.len(), store.feature_dim, |r, c| rows[r][c])
}

pub fn encode(params: &EncoderParams, frames: &[FrameMatrix]) -> Result<(Mat, ForwardCache)> {
    let f = params.feature_dim();
    let mut pooled = Mat::zeros(frames.len(), f);
    for (i, m) in frames.iter().enumerate() {
        if m.feature_dim() != f {
            return Err(Error::Shape(format!(
                "utterance {i} has {} feature columns, encoder expects {f}",
                m.feature_dim()
            )));
        }
        let p = mean_pool(m)?;
        pooled.row_mut(i).copy_from_slice(&p);
    }
    encode_pooled(params, pooled)
}

/// `embedding_i = W * pooled_i + b` (then ReLU if enabled).
pub fn encode_pooled(params: &EncoderParams, pooled: Mat) -> Result<(Mat, ForwardCache)> {
    if pooled.ncols() != params.feature_dim() {
        return Err(Error::Shape(format!(
            "pooled inputs have {} columns, encoder expects {}",
            pooled.ncols(),
            params.feature_dim()
        )));
    }
    let mut emb = &pooled * params.weight.transpose();
    for mut row in emb.row_iter_mut() {
        row += params.bias.transpose();
    }
    let active = if params.relu {
        let mask = emb.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        emb.apply(|v| *v = v.max(0.0));
        Some(mask)
    } else {
        None
    };
    Ok((emb, ForwardCache { pooled, active }))
}

/// Sums over the batch: `dW = sum_i g_i p_i^T`, `db = sum_i g_i`.
pub fn encode_backward(cache: &ForwardCache, grad_embeddings: &Mat) -> Result<EncoderGradients> {
    if grad_embeddings.nrows() != cache.batch_size() {
        return Err(Error::Shape(format!(
            "{} embedding gradients for a batch of {}",
            grad_embeddings.nrows(),
            cache.batch_size()
        )));
    }
    let masked;
    let grad = match &cache.active {
        Some(mask) => {
            masked = grad_embeddings.component_mul(mask);
            &masked
        }
        None => grad_embeddings,
    };
    let weight = grad.transpose() * &cache.pooled;
    let bias = grad.row_sum().transpose();
    Ok(EncoderGradients { weight, bias })
}
