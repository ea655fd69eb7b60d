//! Meta-trains an encoder, sweeping the weight of the auxiliary workers, and
//! reloads the best checkpoint.
//!
//!     cargo run --release --example meta_train -- [proto|ridge|svm]

use fewshot::dataset::{generate_synthetic, FeatureStore, SyntheticSpec};
use fewshot::learners::{LearnerConfig, LearnerKind};
use fewshot::meta::{load_checkpoint, run_training, Model, TrainConfig, CHECKPOINT_FILE, LOG_FILE};
use fewshot::protocol::{make_split, SplitCounts, SplitMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: LearnerKind = std::env::args().nth(1).map_or(Ok(LearnerKind::Proto), |s| s.parse())?;
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 64,
        class_separation: 1.5,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path().join("data"))?;
    let store = FeatureStore::load(&manifest)?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::NoSpo, 0, Some([0.5, 0.25, 0.25]))?;

    for alpha in [1.0, 0.9, 0.5] {
        let cfg = TrainConfig {
            epochs: 5,
            episodes_per_epoch: 200,
            q_query_train: Some(5),
            learner: LearnerConfig::new(kind),
            alpha,
            val_episodes: 500,
            ..TrainConfig::default()
        };
        let out_dir = dir.path().join(format!("alpha-{alpha}"));
        std::fs::create_dir_all(&out_dir)?;
        let outcome = run_training(&store, &split, &cfg, Some(&out_dir))?;
        println!("{kind} alpha={alpha}:");
        for e in &outcome.log {
            println!(
                "  epoch {:>2} lr {:.4} loss {:.4} val {:.4} ± {:.4} ({} ms)",
                e.epoch, e.lr, e.train_loss, e.val_mean, e.val_ci95, e.wall_ms
            );
        }
        let ckpt = load_checkpoint(out_dir.join(CHECKPOINT_FILE))?;
        let model = Model::from_checkpoint(ckpt, cfg.relu);
        println!(
            "  best epoch {} (val {:.4}); checkpoint has {} workers, temperature {:.3}; log at {}",
            outcome.best_epoch,
            outcome.best_val.mean_accuracy,
            model.workers.workers.len(),
            model.temperature,
            out_dir.join(LOG_FILE).display()
        );
    }
    Ok(())
}
