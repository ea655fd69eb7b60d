use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStore;
use crate::encoder::{encode_backward, init_encoder, EncoderGradients, EncoderParams, Mat, Vector, DEFAULT_EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::learners::{self, LearnerConfig};
use crate::protocol::{generate_episode, Episode, EpisodeSpec, SplitAssignment, Subset};
use crate::rng;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::eval::{evaluate, EvalOptions, EvalReport};
use super::loss::{accuracy, cross_entropy, forward_episode};
use super::optim::{apply, OptimizerState, SgdSettings};
use super::workers::{make_workers, worker_loss, WorkerSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub episodes_per_batch: usize,
    pub n_way_train: usize,
    pub m_shot_train: usize,
    /// Defaults to `m_shot_train`.
    pub q_query_train: Option<usize>,
    /// Set from the top-level learner section of a run config.
    #[serde(skip)]
    pub learner: LearnerConfig,
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    /// Weight of the meta loss; `1 - alpha` goes to the workers.
    pub alpha: f64,
    pub workers: Vec<String>,
    pub embedding_dim: usize,
    pub relu: bool,
    pub val_n_way: usize,
    pub val_m_shot: usize,
    pub val_q_query: Option<usize>,
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            episodes_per_epoch: 1000,
            episodes_per_batch: 8,
            n_way_train: 5,
            m_shot_train: 15,
            q_query_train: None,
            learner: LearnerConfig::default(),
            lr: 0.01,
            momentum: 0.9,
            nesterov: true,
            lr_decay_every: 20,
            lr_decay_factor: 0.1,
            weight_decay: 5e-4,
            alpha: 1.0,
            workers: vec!["frame_mean".into(), "frame_logvar".into()],
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            relu: false,
            val_n_way: 5,
            val_m_shot: 5,
            val_q_query: None,
            val_episodes: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn train_spec(&self) -> EpisodeSpec {
        let spec = EpisodeSpec::new(self.n_way_train, self.m_shot_train, Subset::Train);
        match self.q_query_train {
            Some(q) => spec.with_query(q),
            None => spec,
        }
    }

    pub fn val_spec(&self) -> EpisodeSpec {
        let spec = EpisodeSpec::new(self.val_n_way, self.val_m_shot, Subset::Val);
        match self.val_q_query {
            Some(q) => spec.with_query(q),
            None => spec,
        }
    }

    pub fn sgd(&self, epoch: usize) -> SgdSettings {
        SgdSettings {
            lr: lr_for_epoch(self, epoch),
            momentum: self.momentum,
            nesterov: self.nesterov,
            weight_decay: self.weight_decay,
        }
    }

    /// Checks everything that does not need data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.learner.validate()?;
        self.train_spec().validate()?;
        self.val_spec().validate()?;
        if self.epochs == 0 || self.episodes_per_epoch == 0 || self.episodes_per_batch == 0 {
            return bad("epochs, episodes_per_epoch and episodes_per_batch must be positive".into());
        }
        if !self.episodes_per_epoch.is_multiple_of(self.episodes_per_batch) {
            return bad(format!(
                "episodes_per_epoch ({}) must be divisible by episodes_per_batch ({})",
                self.episodes_per_epoch, self.episodes_per_batch
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("lr_decay_factor", self.lr_decay_factor),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive".into());
        }
        if self.embedding_dim == 0 || self.val_episodes == 0 {
            return bad("embedding_dim and val_episodes must be positive".into());
        }
        for w in &self.workers {
            w.parse::<super::WorkerKind>()?;
        }
        Ok(())
    }
}

/// Step decay: `lr * factor^floor((epoch - 1) / every)` for 1-based epochs.
pub fn lr_for_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let drops = epoch.saturating_sub(1) / cfg.lr_decay_every.max(1);
    cfg.lr * cfg.lr_decay_factor.powi(drops as i32)
}

/// Everything the optimizer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub temperature: f64,
    pub workers: WorkerSet,
}

impl Model {
    /// Fresh model; workers are only built when `alpha < 1`.
    pub fn init(cfg: &TrainConfig, feature_dim: usize) -> Result<Self> {
        let mut encoder = init_encoder(feature_dim, cfg.embedding_dim, cfg.seed)?;
        encoder.relu = cfg.relu;
        let workers = if cfg.alpha < 1.0 {
            make_workers(&cfg.workers, feature_dim, cfg.embedding_dim, cfg.seed)?
        } else {
            WorkerSet::default()
        };
        Ok(Self {
            encoder,
            temperature: cfg.learner.temperature,
            workers,
        })
    }

    /// Learner config with the model's current temperature.
    pub fn learner_config(&self, base: &LearnerConfig) -> LearnerConfig {
        LearnerConfig {
            temperature: self.temperature,
            ..base.clone()
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            encoder: self.encoder.clone(),
            temperature: self.temperature,
            workers: self.workers.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, relu: bool) -> Self {
        let mut encoder = ckpt.encoder;
        encoder.relu = relu;
        Self {
            encoder,
            temperature: ckpt.temperature,
            workers: ckpt.workers,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ModelGradients {
    pub encoder: EncoderGradients,
    pub temperature: f64,
    pub workers: Vec<(Mat, Vector)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOutcome {
    /// Mean query cross-entropy over the batch.
    pub meta_loss: f64,
    /// Summed worker losses (zero when workers are off).
    pub worker_loss: f64,
    pub total_loss: f64,
    pub accuracy: f64,
}

struct EpisodeGrad {
    loss: f64,
    accuracy: f64,
    worker_loss: f64,
    encoder: EncoderGradients,
    temperature: f64,
    workers: Vec<(Mat, Vector)>,
}

/// One optimizer step on the mean loss of `episodes`.
pub fn train_batch(
    model: &mut Model,
    learner: &LearnerConfig,
    episodes: &[Episode],
    store: &FeatureStore,
    state: &mut OptimizerState,
    settings: &SgdSettings,
    alpha: f64,
) -> Result<BatchOutcome> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("train_batch needs at least one episode".into()));
    }
    let cfg = model.learner_config(learner);
    let b = episodes.len() as f64;
    let use_workers = alpha < 1.0 && !model.workers.is_empty();
    let n_total: usize = episodes.iter().map(|e| e.support.len() + e.query.len()).sum();
    let worker_scale = (1.0 - alpha) / n_total as f64;

    let per_episode: Vec<EpisodeGrad> = episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| {
            let fwd = forward_episode(&model.encoder, &cfg, ep, store)?;
            let labels = ep.query_labels();
            let (loss, grad_logits) = cross_entropy(&fwd.output.logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    episode: i,
                    learner: cfg.kind.to_string(),
                });
            }
            let lg = learners::backward(cfg.kind, &fwd.output.state, &grad_logits)?;
            let mut grad_emb = Mat::zeros(fwd.embeddings.nrows(), fwd.embeddings.ncols());
            grad_emb.rows_mut(0, fwd.n_support).copy_from(&(lg.support * (alpha / b)));
            grad_emb
                .rows_mut(fwd.n_support, labels.len())
                .copy_from(&(lg.query * (alpha / b)));
            let (worker_loss, workers) = if use_workers {
                let records: Vec<usize> = ep.support.iter().chain(&ep.query).map(|&(r, _)| r).collect();
                let wg = worker_loss(&model.workers, &fwd.embeddings, &records, store, worker_scale);
                grad_emb += &wg.embeddings;
                (wg.loss, wg.weights)
            } else {
                (0.0, Vec::new())
            };
            Ok(EpisodeGrad {
                loss,
                accuracy: accuracy(&fwd.output.logits, &labels),
                worker_loss,
                encoder: encode_backward(&fwd.cache, &grad_emb)?,
                temperature: lg.temperature * alpha / b,
                workers,
            })
        })
        .collect::<Result<_>>()?;

    let mut grads = ModelGradients {
        encoder: EncoderGradients::zeros(&model.encoder),
        temperature: 0.0,
        workers: model
            .workers
            .workers
            .iter()
            .map(|w| (Mat::zeros(w.weight.nrows(), w.weight.ncols()), Vector::zeros(w.bias.len())))
            .collect(),
    };
    let (mut meta, mut wl, mut acc) = (0.0, 0.0, 0.0);
    for g in &per_episode {
        meta += g.loss;
        wl += g.worker_loss;
        acc += g.accuracy;
        grads.encoder.add_assign(&g.encoder);
        grads.temperature += g.temperature;
        for ((aw, ab), (gw, gb)) in grads.workers.iter_mut().zip(&g.workers) {
            *aw += gw;
            *ab += gb;
        }
    }
    let meta_loss = meta / b;
    let total_loss = alpha * meta_loss + wl;
    if !total_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            episode: 0,
            learner: cfg.kind.to_string(),
        });
    }
    apply(model, &grads, state, settings, use_workers);
    Ok(BatchOutcome {
        meta_loss,
        worker_loss: wl,
        total_loss,
        accuracy: acc / b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mean: f64,
    pub val_std: f64,
    pub val_ci95: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub log: Vec<TrainLogEntry>,
    pub best: Model,
    pub best_epoch: usize,
    pub best_val: EvalReport,
    /// Model after the last epoch.
    pub last: Model,
}

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "best.ckpt";

/// Full episodic training with best-validation model selection. With an
/// output directory, appends one JSON line per epoch to `train_log.jsonl`
/// and keeps the best parameters in `best.ckpt`.
pub fn run_training(
    store: &FeatureStore,
    split: &SplitAssignment,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let train_spec = cfg.train_spec();
    let val_spec = cfg.val_spec();
    train_spec.check_feasible(split)?;
    val_spec.check_feasible(split)?;

    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(LOG_FILE);
            Some((fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };

    let mut model = Model::init(cfg, store.feature_dim)?;
    let mut state = OptimizerState::zeros(&model);
    let train_seed = rng::derive(cfg.seed, rng::domain::TRAIN_EPISODES);
    let val_seed = rng::derive(cfg.seed, rng::domain::VAL_EPISODES);
    let per_batch = cfg.episodes_per_batch;
    let steps = cfg.episodes_per_epoch / per_batch;

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Model, usize, EvalReport)> = None;
    let mut global = 0u64;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let settings = cfg.sgd(epoch);
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let episodes = (0..per_batch)
                .map(|j| generate_episode(split, &train_spec, &mut rng::stream(train_seed, global + j as u64)))
                .collect::<Result<Vec<_>>>()?;
            global += per_batch as u64;
            let out = train_batch(&mut model, &cfg.learner, &episodes, store, &mut state, &settings, cfg.alpha)?;
            loss_sum += out.total_loss;
        }
        let val = evaluate(
            &model.encoder,
            &model.learner_config(&cfg.learner),
            split,
            store,
            &val_spec,
            cfg.val_episodes,
            val_seed,
            EvalOptions::default(),
        )?;
        let entry = TrainLogEntry {
            epoch,
            lr: settings.lr,
            train_loss: loss_sum / steps as f64,
            val_mean: val.mean_accuracy,
            val_std: val.std_accuracy,
            val_ci95: val.ci95_halfwidth,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if let Some((f, p)) = log_file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(&*p, e))?;
        }
        log.push(entry);
        if best.as_ref().is_none_or(|(_, _, r)| val.mean_accuracy > r.mean_accuracy) {
            if let Some(dir) = out_dir {
                save_checkpoint(dir.join(CHECKPOINT_FILE), &model.to_checkpoint())?;
            }
            best = Some((model.clone(), epoch, val));
        }
    }
    let (best, best_epoch, best_val) = best.expect("at least one epoch");
    Ok(TrainingOutcome {
        log,
        best,
        best_epoch,
        best_val,
        last: model,
    })
}
