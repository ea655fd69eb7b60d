use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::UtteranceRecord;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"FSFA";
pub const ARCHIVE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Row-major `n_frames x feature_dim` block of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    n_frames: usize,
    feature_dim: usize,
    data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(n_frames: usize, feature_dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_frames * feature_dim {
            return Err(Error::Shape(format!(
                "{} values for a {n_frames}x{feature_dim} frame matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("at frame {}, column {}", pos / feature_dim.max(1), pos % feature_dim.max(1)),
            });
        }
        Ok(Self {
            n_frames,
            feature_dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged frame rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.feature_dim.max(1)).take(self.n_frames)
    }
}

pub fn write_features(path: impl AsRef<Path>, matrix: &FrameMatrix) -> Result<()> {
    let path = path.as_ref();
    if matrix.n_frames == 0 || matrix.feature_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "refusing to write empty {}x{} frame matrix to {}",
            matrix.n_frames,
            matrix.feature_dim,
            path.display()
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * matrix.data.len());
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.n_frames as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.feature_dim as u32).to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads an archive without checking it against a manifest record.
pub fn read_archive(path: impl AsRef<Path>) -> Result<FrameMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != ARCHIVE_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "FSFA",
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != ARCHIVE_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            version,
        });
    }
    let n_frames = word(8) as usize;
    let feature_dim = word(12) as usize;
    let expected = HEADER_LEN as u64 + 4 * n_frames as u64 * feature_dim as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 != expected {
        return Err(Error::Shape(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() as u64 - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FrameMatrix::new(n_frames, feature_dim, data).map_err(|e| match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("in {} {context}", path.display()),
        },
        other => other,
    })
}

/// Reads the archive behind `record`, checking the header against the record.
pub fn read_features(record: &UtteranceRecord) -> Result<FrameMatrix> {
    let m = read_archive(&record.feature_path)?;
    if m.n_frames != record.n_frames || m.feature_dim != record.feature_dim {
        return Err(Error::HeaderMismatch {
            path: record.feature_path.clone(),
            header_frames: m.n_frames,
            header_dim: m.feature_dim,
            record_frames: record.n_frames,
            record_dim: record.feature_dim,
        });
    }
    Ok(m)
}
