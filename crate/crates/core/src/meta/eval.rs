use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStore;
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::learners::{LearnerConfig, LearnerKind};
use crate::protocol::{generate_episode, Episode, EpisodeSpec, SplitAssignment, Subset};
use crate::rng;

use super::loss::{argmax_lowest, forward_episode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Permute query labels inside each episode (chance-level calibration).
    pub shuffle_query_labels: bool,
    pub keep_per_episode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subset: Subset,
    pub learner: LearnerKind,
    pub n_way: usize,
    pub m_shot: usize,
    pub q_query: usize,
    pub n_episodes: usize,
    pub seed: u64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub ci95_halfwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_episode_accuracies: Option<Vec<f64>>,
}

/// Mean, sample standard deviation and `1.96 * std / sqrt(n)`.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std, 1.96 * std / n.sqrt())
}

/// Lowest-index argmax prediction for every query of `episode`.
pub fn episode_predictions(
    encoder: &EncoderParams,
    cfg: &LearnerConfig,
    episode: &Episode,
    store: &FeatureStore,
) -> Result<Vec<usize>> {
    let fwd = forward_episode(encoder, cfg, episode, store)?;
    Ok(fwd
        .output
        .logits
        .row_iter()
        .map(|r| argmax_lowest(r.iter().copied()))
        .collect())
}

/// Accuracy over `n_episodes` sampled episodes with the encoder frozen; only
/// the base learner is fit per episode. Episode `i` is drawn from stream
/// `(seed, i)`, so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    encoder: &EncoderParams,
    cfg: &LearnerConfig,
    split: &SplitAssignment,
    store: &FeatureStore,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seed: u64,
    opts: EvalOptions,
) -> Result<EvalReport> {
    spec.check_feasible(split)?;
    let accs: Vec<f64> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let episode = generate_episode(split, spec, &mut rng)?;
            let preds = episode_predictions(encoder, cfg, &episode, store)?;
            let mut labels = episode.query_labels();
            if opts.shuffle_query_labels {
                labels.shuffle(&mut rng);
            }
            let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
            Ok(correct as f64 / labels.len() as f64)
        })
        .collect::<Result<_>>()?;
    let (mean, std, ci95) = summarize(&accs);
    Ok(EvalReport {
        subset: spec.subset,
        learner: cfg.kind,
        n_way: spec.n_way,
        m_shot: spec.m_shot,
        q_query: spec.q_query,
        n_episodes,
        seed,
        mean_accuracy: mean,
        std_accuracy: std,
        ci95_halfwidth: ci95,
        per_episode_accuracies: opts.keep_per_episode.then_some(accs),
    })
}
