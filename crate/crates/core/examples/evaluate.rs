//! Trains briefly, then reports 5-way 5-shot and 1-shot test accuracy for
//! each head plus a shuffled-label chance check.
//!
//!     cargo run --release --example evaluate

use fewshot::dataset::{generate_synthetic, FeatureStore, SyntheticSpec};
use fewshot::learners::{LearnerConfig, LearnerKind};
use fewshot::meta::{evaluate, run_training, EvalOptions, TrainConfig};
use fewshot::protocol::{make_split, EpisodeSpec, SplitCounts, SplitMode, Subset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 64,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;
    let store = FeatureStore::load(&manifest)?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::NoSpo, 0, Some([0.5, 0.25, 0.25]))?;

    let cfg = TrainConfig {
        epochs: 3,
        episodes_per_epoch: 200,
        q_query_train: Some(5),
        val_episodes: 500,
        ..TrainConfig::default()
    };
    let model = run_training(&store, &split, &cfg, None)?.best;

    println!("{:<6}{:>16}{:>16}{:>16}", "head", "5-shot", "1-shot", "shuffled");
    for kind in LearnerKind::ALL {
        let lcfg = model.learner_config(&LearnerConfig::new(kind));
        let mut cells = Vec::new();
        for (m, shuffle) in [(5, false), (1, false), (5, true)] {
            let spec = EpisodeSpec::new(5, m, Subset::Test).with_query(5);
            let opts = EvalOptions {
                shuffle_query_labels: shuffle,
                keep_per_episode: false,
            };
            let r = evaluate(&model.encoder, &lcfg, &split, &store, &spec, 2000, 1, opts)?;
            cells.push(format!("{:.4}±{:.4}", r.mean_accuracy, r.ci95_halfwidth));
        }
        println!("{:<6}{:>16}{:>16}{:>16}", kind.to_string(), cells[0], cells[1], cells[2]);
    }
    Ok(())
}
