use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

use super::{load_manifest, write_features, write_manifest, DatasetManifest, FrameMatrix, UtteranceRecord};

/// Isotropic Gaussian class clusters over frame features.
///
/// Class means sit on a sphere of radius `class_separation / sqrt(2)` inside a
/// random `signal_dim`-dimensional subspace shared by all classes, spread
/// apart so that pairwise distances stay close to `class_separation` (the
/// mean pairwise distance is about `class_separation`, the closest pair
/// typically above 0.75 of it at 28 classes in 8 dimensions). Within-class frame
/// noise has unit variance per dimension, split between an utterance-level
/// offset (fraction `utterance_noise`) that survives pooling and an
/// independent per-frame term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub speaker_pool: usize,
    pub utterances_per_class: usize,
    pub feature_dim: usize,
    pub frames_range: (usize, usize),
    pub class_separation: f64,
    /// Dimension of the subspace holding the class means (capped at
    /// `feature_dim`). Kept below the number of training classes so that
    /// training classes span every direction test classes differ in.
    pub signal_dim: usize,
    pub utterance_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 28,
            speaker_pool: 20,
            utterances_per_class: 40,
            feature_dim: 256,
            frames_range: (50, 100),
            class_separation: 3.0,
            signal_dim: 8,
            utterance_noise: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.n_classes == 0 || self.speaker_pool == 0 || self.utterances_per_class == 0 || self.feature_dim == 0 {
            return bad("counts and dimensions must be positive");
        }
        let (lo, hi) = self.frames_range;
        if lo == 0 || lo > hi {
            return bad("frames_range must satisfy 1 <= min <= max");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation must be finite and nonnegative");
        }
        if self.signal_dim == 0 {
            return bad("signal_dim must be positive");
        }
        if !(0.0..=1.0).contains(&self.utterance_noise) {
            return bad("utterance_noise must lie in [0, 1]");
        }
        Ok(())
    }
}

const SPREAD_ITERS: usize = 200;
const SPREAD_STEP: f64 = 0.01;

/// Unit vectors pushed apart by a few steps of inverse-square repulsion,
/// renormalized after each step.
fn spread_on_sphere(points: &mut [Vec<f64>]) {
    let normalize = |p: &mut Vec<f64>| {
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            p.iter_mut().for_each(|v| *v /= n);
        }
    };
    points.iter_mut().for_each(normalize);
    let r = points.first().map_or(0, Vec::len);
    for _ in 0..SPREAD_ITERS {
        let forces: Vec<Vec<f64>> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut f = vec![0.0; r];
                for (j, q) in points.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
                    let d2 = diff.iter().map(|v| v * v).sum::<f64>().max(1e-12);
                    let w = d2.powf(-1.5);
                    f.iter_mut().zip(&diff).for_each(|(fk, dk)| *fk += w * dk);
                }
                f
            })
            .collect();
        for (p, f) in points.iter_mut().zip(&forces) {
            p.iter_mut().zip(f).for_each(|(v, fk)| *v += SPREAD_STEP * fk);
            normalize(p);
        }
    }
}

fn class_means(spec: &SyntheticSpec, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let d = spec.feature_dim;
    let r = spec.signal_dim.min(d);
    let gauss = DMatrix::<f64>::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    let basis = gauss.qr().q();
    let mut dirs: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..r).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    spread_on_sphere(&mut dirs);
    // radius sep/sqrt(2): orthogonal directions end up exactly sep apart
    let radius = spec.class_separation / std::f64::consts::SQRT_2;
    dirs.iter()
        .map(|z| (0..d).map(|i| (0..r).map(|j| basis[(i, j)] * z[j]).sum::<f64>() * radius).collect())
        .collect()
}

pub fn class_name(k: usize) -> String {
    format!("class_{k:03}")
}

fn speaker_name(s: usize) -> String {
    format!("spk_{s:03}")
}

/// Writes `manifest.jsonl` and `features/*.fsfa` under `out_dir` and returns
/// the loaded manifest. Output is a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let d = spec.feature_dim;
    let base_seed = rng::derive(spec.seed, domain::SYNTH);
    let mut rng = rng::rng(base_seed);

    let means = class_means(spec, &mut rng);

    let utt_std = spec.utterance_noise.sqrt();
    let frame_std = (1.0 - spec.utterance_noise).sqrt();
    let (lo, hi) = spec.frames_range;
    let n_total = spec.n_classes * spec.utterances_per_class;

    let records: Vec<UtteranceRecord> = (0..n_total)
        .into_par_iter()
        .map(|g| {
            let k = g / spec.utterances_per_class;
            let j = g % spec.utterances_per_class;
            let mut rng = rng::stream(base_seed, g as u64 + 1);
            let n_frames = rng.random_range(lo..=hi);
            let offset: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * utt_std).collect();
            let mut data = Vec::with_capacity(n_frames * d);
            for _ in 0..n_frames {
                for i in 0..d {
                    let noise: f64 = rng.sample(StandardNormal);
                    data.push((means[k][i] + offset[i] + noise * frame_std) as f32);
                }
            }
            let id = format!("{}_{j:04}", class_name(k));
            let path: PathBuf = feat_dir.join(format!("{id}.fsfa"));
            write_features(&path, &FrameMatrix::new(n_frames, d, data)?)?;
            Ok(UtteranceRecord {
                utterance_id: id,
                speaker_id: speaker_name(g % spec.speaker_pool),
                label: class_name(k),
                feature_path: path,
                n_frames,
                feature_dim: d,
            })
        })
        .collect::<Result<_>>()?;

    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    load_manifest(&manifest_path)
}
