//! Episodic meta-training and episode-based evaluation.

mod checkpoint;
mod eval;
mod loss;
mod optim;
mod train;
mod workers;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use eval::{episode_predictions, evaluate, summarize, EvalOptions, EvalReport};
pub use loss::{argmax_lowest, cross_entropy, episode_loss, EpisodeLoss};
pub use optim::{OptimizerState, SgdSettings};
pub use train::{
    lr_for_epoch, run_training, train_batch, BatchOutcome, Model, TrainConfig, TrainLogEntry, TrainingOutcome, CHECKPOINT_FILE,
    LOG_FILE,
};
pub use workers::{make_workers, Worker, WorkerKind, WorkerSet};
