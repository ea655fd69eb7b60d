//! Binary checkpoint: `FSCK`, version, feature_dim, embedding_dim (u32 LE),
//! then W row-major, b and the temperature as f32 LE. When workers are
//! present the file continues with a u32 worker count and, per worker, a
//! u32-length-prefixed UTF-8 name, u32 target_dim, its weight (row-major)
//! and bias.

use std::fs;
use std::path::Path;

use crate::encoder::{EncoderParams, Mat, Vector};
use crate::error::{Error, Result};

use super::workers::{Worker, WorkerKind, WorkerSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderParams,
    pub temperature: f64,
    pub workers: WorkerSet,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
}

fn put_vector(buf: &mut Vec<u8>, v: &Vector) {
    for x in v.iter() {
        buf.extend_from_slice(&(*x as f32).to_le_bytes());
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let e = &ckpt.encoder;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION as usize);
    put_u32(&mut buf, e.feature_dim());
    put_u32(&mut buf, e.embedding_dim());
    put_matrix(&mut buf, &e.weight);
    put_vector(&mut buf, &e.bias);
    buf.extend_from_slice(&(ckpt.temperature as f32).to_le_bytes());
    if !ckpt.workers.is_empty() {
        put_u32(&mut buf, ckpt.workers.workers.len());
        for w in &ckpt.workers.workers {
            let name = w.kind.name().as_bytes();
            put_u32(&mut buf, name.len());
            buf.extend_from_slice(name);
            put_u32(&mut buf, w.target_dim());
            put_matrix(&mut buf, &w.weight);
            put_vector(&mut buf, &w.bias);
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.into(),
                expected: (self.pos + n) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(4 * n)?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("in checkpoint {}", self.path.display()),
            });
        }
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        Ok(Mat::from_row_slice(rows, cols, &self.f32s(rows * cols)?))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "FSCK",
        });
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadVersion { path: path.into(), version });
    }
    let feature_dim = r.u32()?;
    let embedding_dim = r.u32()?;
    let weight = r.matrix(embedding_dim, feature_dim)?;
    let bias = Vector::from_vec(r.f32s(embedding_dim)?);
    let temperature = r.f32s(1)?[0];
    let mut workers = WorkerSet::default();
    if r.pos < bytes.len() {
        let count = r.u32()?;
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::InvalidArgument(format!("{}: worker name is not UTF-8", path.display())))?
                .to_string();
            let kind: WorkerKind = name.parse()?;
            let target_dim = r.u32()?;
            let weight = r.matrix(target_dim, embedding_dim)?;
            let bias = Vector::from_vec(r.f32s(target_dim)?);
            workers.workers.push(Worker { kind, weight, bias });
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Shape(format!("{}: trailing bytes in checkpoint", path.display())));
    }
    Ok(Checkpoint {
        encoder: EncoderParams {
            weight,
            bias,
            relu: false,
        },
        temperature,
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_encoder;
    use crate::meta::make_workers;

    fn f32_exact(mut c: Checkpoint) -> Checkpoint {
        c.encoder.weight.apply(|v| *v = *v as f32 as f64);
        c
    }

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = f32_exact(Checkpoint {
            encoder: init_encoder(3, 2, 1).unwrap(),
            temperature: 1.5,
            workers: WorkerSet::default(),
        });
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * (6 + 2 + 1));
        assert_eq!(&bytes[..4], b"FSCK");
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn workers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        let mut workers = make_workers(&["frame_mean", "frame_logvar"], 3, 2, 0).unwrap();
        for w in &mut workers.workers {
            w.weight.apply(|v| *v = *v as f32 as f64);
        }
        let ckpt = f32_exact(Checkpoint {
            encoder: init_encoder(3, 2, 1).unwrap(),
            temperature: 0.75,
            workers,
        });
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        fs::write(&path, b"FSFA\x01\x00\x00\x00").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadMagic { .. })));
        let ckpt = Checkpoint {
            encoder: init_encoder(3, 2, 1).unwrap(),
            temperature: 1.0,
            workers: WorkerSet::default(),
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Truncated { .. })));
    }
}
