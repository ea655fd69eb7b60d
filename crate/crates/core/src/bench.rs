//! Supervised reference points: an MLP over pooled features trained from
//! scratch on the `m` shots of an episode (baseline) or on every available
//! record of the episode's classes (skyline), scored on the episode's query
//! set with the same argmax rule as episodic evaluation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStore;
use crate::encoder::{gather_pooled, glorot_bound, Mat, Vector};
use crate::error::{Error, Result};
use crate::meta::{argmax_lowest, cross_entropy, summarize};
use crate::protocol::{generate_episode, Episode, EpisodeSpec, SplitAssignment, Subset};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Baseline,
    Skyline,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Baseline => "baseline",
            BenchMode::Skyline => "skyline",
        })
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(BenchMode::Baseline),
            "skyline" => Ok(BenchMode::Skyline),
            other => Err(Error::InvalidArgument(format!("unknown bench mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub hidden: usize,
    pub baseline_epochs: usize,
    pub skyline_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Independent class/record draws per report.
    pub draws: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            baseline_epochs: 100,
            skyline_epochs: 30,
            lr: 0.01,
            batch_size: 8,
            draws: 20,
        }
    }
}

impl BenchConfig {
    pub fn epochs(&self, mode: BenchMode) -> usize {
        match mode {
            BenchMode::Baseline => self.baseline_epochs,
            BenchMode::Skyline => self.skyline_epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.draws == 0 {
            return Err(Error::InvalidArgument("bench: hidden, batch_size and draws must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("bench: lr must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// `feature_dim -> hidden (ReLU) -> n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Mat,
    pub b1: Vector,
    pub w2: Mat,
    pub b2: Vector,
}

impl MlpParams {
    pub fn n_classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b1.len() != self.w1.nrows() || self.w2.ncols() != self.w1.nrows() || self.b2.len() != self.w2.nrows() {
            return Err(Error::Shape("MLP layer dimensions do not chain".into()));
        }
        let all = self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).chain(self.b2.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in MLP parameters".into(),
            });
        }
        Ok(())
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut rng::Rng) -> Mat {
    let a = glorot_bound(cols, rows);
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.random_range(-a..a);
        }
    }
    m
}

pub fn init_mlp(feature_dim: usize, hidden: usize, n_classes: usize, seed: u64) -> MlpParams {
    let mut rng = rng::rng(seed);
    MlpParams {
        w1: glorot(hidden, feature_dim, &mut rng),
        b1: Vector::zeros(hidden),
        w2: glorot(n_classes, hidden, &mut rng),
        b2: Vector::zeros(n_classes),
    }
}

fn add_row_bias(m: &mut Mat, b: &Vector) {
    for mut row in m.row_iter_mut() {
        row += b.transpose();
    }
}

/// Logits for a batch of pooled inputs (one row each).
pub fn mlp_logits(params: &MlpParams, x: &Mat) -> Mat {
    let mut h = x * params.w1.transpose();
    add_row_bias(&mut h, &params.b1);
    h.apply(|v| *v = v.max(0.0));
    let mut out = h * params.w2.transpose();
    add_row_bias(&mut out, &params.b2);
    out
}

/// Mean cross-entropy on `(x, labels)` and its parameter gradients.
pub fn mlp_loss_grad(params: &MlpParams, x: &Mat, labels: &[usize]) -> (f64, MlpParams) {
    let mut pre = x * params.w1.transpose();
    add_row_bias(&mut pre, &params.b1);
    let h = pre.map(|v| v.max(0.0));
    let mut logits = &h * params.w2.transpose();
    add_row_bias(&mut logits, &params.b2);
    let (loss, g_out) = cross_entropy(&logits, labels);
    let w2 = g_out.transpose() * &h;
    let b2 = g_out.row_sum().transpose();
    let mut g_h = &g_out * &params.w2;
    g_h.zip_apply(&pre, |g, p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    let w1 = g_h.transpose() * x;
    let b1 = g_h.row_sum().transpose();
    (loss, MlpParams { w1, b1, w2, b2 })
}

/// Minibatch SGD on cross-entropy from a fresh Glorot init. Returns the
/// parameters and the mean loss of the final epoch.
pub fn train_supervised(
    store: &FeatureStore,
    examples: &[(usize, usize)],
    n_classes: usize,
    cfg: &BenchConfig,
    epochs: usize,
    seed: u64,
) -> Result<(MlpParams, f64)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InfeasibleEpisode("no training examples for the supervised model".into()));
    }
    if let Some(&(_, y)) = examples.iter().find(|(_, y)| *y >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {y} outside 0..{n_classes}")));
    }
    let mut params = init_mlp(store.feature_dim, cfg.hidden, n_classes, seed);
    let mut rng = rng::stream(seed, 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut last = f64::NAN;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = gather_pooled(store, chunk.iter().map(|&i| examples[i].0));
            let y: Vec<usize> = chunk.iter().map(|&i| examples[i].1).collect();
            let (loss, g) = mlp_loss_grad(&params, &x, &y);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "in supervised training loss".into(),
                });
            }
            total += loss * chunk.len() as f64;
            if cfg.lr > 0.0 {
                params.w1 -= g.w1 * cfg.lr;
                params.b1 -= g.b1 * cfg.lr;
                params.w2 -= g.w2 * cfg.lr;
                params.b2 -= g.b2 * cfg.lr;
            }
        }
        last = total / examples.len() as f64;
    }
    Ok((params, last))
}

/// Fraction of `examples` whose lowest-index argmax equals the label.
pub fn eval_supervised(params: &MlpParams, store: &FeatureStore, examples: &[(usize, usize)]) -> Result<f64> {
    if let Some(&(r, y)) = examples.iter().find(|(_, y)| *y >= params.n_classes()) {
        return Err(Error::UnseenLabel(format!("record {r} has label {y}, model knows {}", params.n_classes())));
    }
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no evaluation examples".into()));
    }
    let logits = mlp_logits(params, &gather_pooled(store, examples.iter().map(|&(r, _)| r)));
    let correct = examples
        .iter()
        .enumerate()
        .filter(|&(i, &(_, y))| argmax_lowest(logits.row(i).iter().copied()) == y)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Training examples for `mode` on the classes of `episode`: its support set
/// (baseline) or every split record of those classes outside its query set
/// (skyline).
pub fn training_examples(episode: &Episode, split: &SplitAssignment, mode: BenchMode) -> Vec<(usize, usize)> {
    match mode {
        BenchMode::Baseline => episode.support.clone(),
        BenchMode::Skyline => {
            let held: std::collections::HashSet<usize> = episode.query.iter().map(|&(r, _)| r).collect();
            let pool = split.pool(episode.spec.subset);
            episode
                .class_names
                .iter()
                .enumerate()
                .flat_map(|(local, name)| {
                    let recs = &pool.iter().find(|(c, _)| c == name).expect("episode class in pool").1;
                    recs.iter().filter(|r| !held.contains(r)).map(move |&r| (r, local))
                })
                .collect()
        }
    }
}

/// Query accuracy of a supervised model trained on one episode's classes.
pub fn bench_on_episode(
    episode: &Episode,
    split: &SplitAssignment,
    store: &FeatureStore,
    cfg: &BenchConfig,
    mode: BenchMode,
    seed: u64,
) -> Result<f64> {
    let train = training_examples(episode, split, mode);
    let (params, _) = train_supervised(store, &train, episode.spec.n_way, cfg, cfg.epochs(mode), seed)?;
    eval_supervised(&params, store, &episode.query)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub subset: Subset,
    pub n_way: usize,
    pub m_shot: usize,
    pub q_query: usize,
    /// Number of independent draws.
    pub n_episodes: usize,
    pub seed: u64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub ci95_halfwidth: f64,
    pub per_episode_accuracies: Vec<f64>,
}

/// Repeats [`bench_on_episode`] over `cfg.draws` seeded draws. Draw `i` uses
/// the same episode for both modes, so baseline and skyline are paired.
pub fn run_bench(
    split: &SplitAssignment,
    store: &FeatureStore,
    spec: &EpisodeSpec,
    cfg: &BenchConfig,
    mode: BenchMode,
    seed: u64,
) -> Result<BenchReport> {
    cfg.validate()?;
    spec.check_feasible(split)?;
    let base = rng::derive(seed, domain::BENCH);
    let accs = (0..cfg.draws)
        .map(|i| {
            let episode = generate_episode(split, spec, &mut rng::stream(base, 2 * i as u64))?;
            bench_on_episode(&episode, split, store, cfg, mode, rng::derive(base, 2 * i as u64 + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std, ci95) = summarize(&accs);
    Ok(BenchReport {
        mode,
        subset: spec.subset,
        n_way: spec.n_way,
        m_shot: spec.m_shot,
        q_query: spec.q_query,
        n_episodes: cfg.draws,
        seed,
        mean_accuracy: mean,
        std_accuracy: std,
        ci95_halfwidth: ci95,
        per_episode_accuracies: accs,
    })
}
