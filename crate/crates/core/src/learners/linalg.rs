use crate::encoder::Mat;
use crate::error::{Error, Result};

/// Smallest accepted reciprocal condition number.
pub const RCOND_MIN: f64 = 1e-12;

fn norm1(m: &Mat) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Inverse through a partially pivoted LU, rejecting systems whose 1-norm
/// reciprocal condition number falls below `RCOND_MIN`.
pub fn guarded_inverse(k: &Mat) -> Result<Mat> {
    let inv = k.clone().lu().try_inverse().ok_or(Error::Conditioning { rcond: 0.0 })?;
    let rcond = 1.0 / (norm1(k) * norm1(&inv));
    if !rcond.is_finite() || rcond < RCOND_MIN {
        return Err(Error::Conditioning {
            rcond: if rcond.is_finite() { rcond } else { 0.0 },
        });
    }
    Ok(inv)
}
