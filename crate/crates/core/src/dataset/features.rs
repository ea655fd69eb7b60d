use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{read_features, DatasetManifest, FrameMatrix};

/// Column means over frames, accumulated in f64.
pub fn mean_pool(matrix: &FrameMatrix) -> Result<Vec<f64>> {
    if matrix.n_frames() == 0 {
        return Err(Error::InvalidArgument("mean_pool of a matrix with no frames".into()));
    }
    let mut acc = vec![0.0f64; matrix.feature_dim()];
    for row in matrix.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += f64::from(v);
        }
    }
    let n = matrix.n_frames() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

const LOGVAR_FLOOR: f64 = 1e-6;

/// Elementwise log of the population variance across frames. A single frame
/// yields the zero vector; variances are floored at 1e-6 before the log.
pub fn frame_logvar(matrix: &FrameMatrix) -> Result<Vec<f64>> {
    let mean = mean_pool(matrix)?;
    if matrix.n_frames() == 1 {
        return Ok(vec![0.0; matrix.feature_dim()]);
    }
    let mut acc = vec![0.0f64; matrix.feature_dim()];
    for row in matrix.rows() {
        for ((a, &v), m) in acc.iter_mut().zip(row).zip(&mean) {
            let d = f64::from(v) - m;
            *a += d * d;
        }
    }
    let n = matrix.n_frames() as f64;
    Ok(acc.into_iter().map(|s| (s / n).max(LOGVAR_FLOOR).ln()).collect())
}

/// Per-record pooled statistics, indexed like `manifest.records`.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub feature_dim: usize,
    pub pooled: Vec<Vec<f64>>,
    pub logvar: Vec<Vec<f64>>,
}

impl FeatureStore {
    /// Reads every archive of the manifest (in parallel) and keeps only the
    /// pooled mean and log-variance vectors.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let stats: Vec<(Vec<f64>, Vec<f64>)> = manifest
            .records
            .par_iter()
            .map(|r| {
                let m = read_features(r)?;
                Ok((mean_pool(&m)?, frame_logvar(&m)?))
            })
            .collect::<Result<_>>()?;
        let (pooled, logvar) = stats.into_iter().unzip();
        Ok(Self {
            feature_dim: manifest.feature_dim(),
            pooled,
            logvar,
        })
    }

    /// Builds a store straight from pooled vectors (log-variance targets zero).
    pub fn from_pooled(pooled: Vec<Vec<f64>>) -> Result<Self> {
        let feature_dim = pooled.first().map_or(0, Vec::len);
        if pooled.iter().any(|p| p.len() != feature_dim) {
            return Err(Error::Shape("pooled vectors of differing length".into()));
        }
        let logvar = vec![vec![0.0; feature_dim]; pooled.len()];
        Ok(Self {
            feature_dim,
            pooled,
            logvar,
        })
    }

    pub fn len(&self) -> usize {
        self.pooled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pooled.is_empty()
    }
}
