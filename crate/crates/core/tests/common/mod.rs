#![allow(dead_code)]

use fewshot::encoder::Mat;
use fewshot::learners::{self, LearnerConfig, LearnerKind, SolverState};
use rand::Rng;

pub mod suites;

/// Mean softmax cross-entropy, written out independently of the library.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).iter().copied().collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

pub fn cross_entropy_grad(logits: &Mat, labels: &[usize]) -> Mat {
    let n = labels.len() as f64;
    let mut g = Mat::zeros(logits.nrows(), logits.ncols());
    for (i, &y) in labels.iter().enumerate() {
        let max = logits.row(i).max();
        let exps: Vec<f64> = logits.row(i).iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for k in 0..logits.ncols() {
            g[(i, k)] = (exps[k] / z - if k == y { 1.0 } else { 0.0 }) / n;
        }
    }
    g
}

pub struct Instance {
    pub support: Mat,
    pub labels: Vec<usize>,
    pub query: Mat,
    pub query_labels: Vec<usize>,
    pub n_way: usize,
}

pub fn random_instance(seed: u64, n: usize, m: usize, d: usize, q_per_class: usize) -> Instance {
    let mut rng = fewshot::rng::rng(seed);
    let support = Mat::from_fn(n * m, d, |_, _| rng.random_range(-1.0..1.0));
    let query = Mat::from_fn(n * q_per_class, d, |_, _| rng.random_range(-1.0..1.0));
    Instance {
        support,
        labels: (0..n * m).map(|i| i / m).collect(),
        query,
        query_labels: (0..n * q_per_class).map(|i| i / q_per_class).collect(),
        n_way: n,
    }
}

pub struct GradcheckResult {
    pub rel_err: f64,
    pub coordinates: usize,
    /// Coordinates whose difference stencil crossed an SVM active-set change.
    pub skipped: usize,
}

pub fn svm_masks(out: &learners::LearnerOutput) -> Option<Vec<Vec<Vec<bool>>>> {
    match &out.state {
        SolverState::Svm(s) => Some(s.trajectory().masks.clone()),
        _ => None,
    }
}

/// Norm-wise relative error between analytic and central-difference gradients
/// of `CE(learner(support, query))` over every support/query coordinate and
/// the temperature. For the SVM, coordinates whose `+-step` evaluations change
/// any projection active set straddle a kink of the unrolled solver; those are
/// left out and counted in `skipped`.
pub fn learner_gradcheck(cfg: &LearnerConfig, inst: &Instance, step: f64) -> GradcheckResult {
    let eval = |s: &Mat, q: &Mat, t: f64| {
        let c = LearnerConfig { temperature: t, ..cfg.clone() };
        let out = learners::forward(&c, s, &inst.labels, inst.n_way, q).unwrap();
        (cross_entropy(&out.logits, &inst.query_labels), svm_masks(&out))
    };
    let out = learners::forward(cfg, &inst.support, &inst.labels, inst.n_way, &inst.query).unwrap();
    let base_masks = svm_masks(&out);
    let g = cross_entropy_grad(&out.logits, &inst.query_labels);
    let an = learners::backward(cfg.kind, &out.state, &g).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut skipped = 0;
    let mut push = |(lu, mu): (f64, Option<Vec<Vec<Vec<bool>>>>), (ld, md): (f64, Option<Vec<Vec<Vec<bool>>>>), a: f64| {
        if mu != base_masks || md != base_masks {
            skipped += 1;
            return;
        }
        numeric.push((lu - ld) / (2.0 * step));
        analytic.push(a);
    };
    for idx in 0..inst.support.len() {
        let mut up = inst.support.clone();
        up.as_mut_slice()[idx] += step;
        let mut dn = inst.support.clone();
        dn.as_mut_slice()[idx] -= step;
        push(
            eval(&up, &inst.query, cfg.temperature),
            eval(&dn, &inst.query, cfg.temperature),
            an.support.as_slice()[idx],
        );
    }
    for idx in 0..inst.query.len() {
        let mut up = inst.query.clone();
        up.as_mut_slice()[idx] += step;
        let mut dn = inst.query.clone();
        dn.as_mut_slice()[idx] -= step;
        push(
            eval(&inst.support, &up, cfg.temperature),
            eval(&inst.support, &dn, cfg.temperature),
            an.query.as_slice()[idx],
        );
    }
    let t = cfg.temperature;
    push(
        eval(&inst.support, &inst.query, t + step),
        eval(&inst.support, &inst.query, t - step),
        an.temperature,
    );
    GradcheckResult {
        rel_err: relative_error(&analytic, &numeric),
        coordinates: inst.support.len() + inst.query.len() + 1,
        skipped,
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn learner_cfg(kind: LearnerKind) -> LearnerConfig {
    LearnerConfig {
        ridge_lambda: 1.0,
        ..LearnerConfig::new(kind)
    }
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: fewshot::dataset::DatasetManifest,
    pub store: fewshot::dataset::FeatureStore,
}

/// Small synthetic corpus in a temporary directory.
pub fn fixture(spec: &fewshot::dataset::SyntheticSpec) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fewshot::dataset::generate_synthetic(spec, dir.path()).unwrap();
    let store = fewshot::dataset::FeatureStore::load(&manifest).unwrap();
    Fixture { dir, manifest, store }
}

pub fn small_spec(separation: f64, seed: u64) -> fewshot::dataset::SyntheticSpec {
    fewshot::dataset::SyntheticSpec {
        feature_dim: 32,
        frames_range: (5, 12),
        class_separation: separation,
        seed,
        ..Default::default()
    }
}
