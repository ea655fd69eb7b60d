use crate::dataset::FeatureStore;
use crate::encoder::{encode_backward, encode_pooled, gather_pooled, EncoderGradients, EncoderParams, Mat};
use crate::error::{Error, Result};
use crate::learners::{self, LearnerConfig};
use crate::protocol::Episode;

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax_lowest(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> (f64, Mat) {
    let n = labels.len() as f64;
    let mut grad = Mat::zeros(logits.nrows(), logits.ncols());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.max();
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for k in 0..logits.ncols() {
            grad[(i, k)] = (row[k] - lse).exp() / n;
        }
        grad[(i, y)] -= 1.0 / n;
    }
    (loss / n, grad)
}

#[derive(Debug, Clone)]
pub struct EpisodeLoss {
    pub loss: f64,
    pub accuracy: f64,
    pub encoder: EncoderGradients,
    pub temperature: f64,
}

/// Embeddings of one episode: support rows first, then query rows.
pub(crate) struct EpisodeForward {
    pub embeddings: Mat,
    pub cache: crate::encoder::ForwardCache,
    pub output: learners::LearnerOutput,
    pub n_support: usize,
}

pub(crate) fn forward_episode(
    encoder: &EncoderParams,
    cfg: &LearnerConfig,
    episode: &Episode,
    store: &FeatureStore,
) -> Result<EpisodeForward> {
    let ids = episode.support.iter().chain(&episode.query).map(|&(r, _)| r);
    let (embeddings, cache) = encode_pooled(encoder, gather_pooled(store, ids))?;
    let n_support = episode.support.len();
    let support = embeddings.rows(0, n_support).into_owned();
    let query = embeddings.rows(n_support, episode.query.len()).into_owned();
    let output = learners::forward(cfg, &support, &episode.support_labels(), episode.spec.n_way, &query)?;
    Ok(EpisodeForward {
        embeddings,
        cache,
        output,
        n_support,
    })
}

pub(crate) fn accuracy(logits: &Mat, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax_lowest(logits.row(i).iter().copied()) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Query cross-entropy of one episode and its gradients w.r.t. the encoder
/// and the temperature.
pub fn episode_loss(
    encoder: &EncoderParams,
    cfg: &LearnerConfig,
    episode: &Episode,
    store: &FeatureStore,
) -> Result<EpisodeLoss> {
    let fwd = forward_episode(encoder, cfg, episode, store)?;
    let labels = episode.query_labels();
    let (loss, grad_logits) = cross_entropy(&fwd.output.logits, &labels);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            episode: 0,
            learner: cfg.kind.to_string(),
        });
    }
    let lg = learners::backward(cfg.kind, &fwd.output.state, &grad_logits)?;
    let mut grad_emb = Mat::zeros(fwd.embeddings.nrows(), fwd.embeddings.ncols());
    grad_emb.rows_mut(0, fwd.n_support).copy_from(&lg.support);
    grad_emb.rows_mut(fwd.n_support, labels.len()).copy_from(&lg.query);
    Ok(EpisodeLoss {
        loss,
        accuracy: accuracy(&fwd.output.logits, &labels),
        encoder: encode_backward(&fwd.cache, &grad_emb)?,
        temperature: lg.temperature,
    })
}
