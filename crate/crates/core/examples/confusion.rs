//! Episode-averaged confusion matrix over all test classes, with CSV and a
//! gnuplot script for rendering.
//!
//!     cargo run --release --example confusion -- [out_dir]
//!     gnuplot out_dir/confusion.gp

use std::path::PathBuf;

use fewshot::confusion::confusion_matrix;
use fewshot::dataset::{generate_synthetic, FeatureStore, SyntheticSpec};
use fewshot::meta::{run_training, TrainConfig};
use fewshot::protocol::{make_split, EpisodeSpec, SplitCounts, SplitMode, Subset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fewshot-confusion"));
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 64,
        class_separation: 1.5,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;
    let store = FeatureStore::load(&manifest)?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::NoSpo, 0, Some([0.5, 0.25, 0.25]))?;
    let cfg = TrainConfig {
        epochs: 5,
        episodes_per_epoch: 200,
        q_query_train: Some(5),
        val_episodes: 500,
        ..TrainConfig::default()
    };
    let model = run_training(&store, &split, &cfg, None)?.best;

    let n = split.pool(Subset::Test).len();
    let episode_spec = EpisodeSpec::new(n, 5, Subset::Test);
    let cm = confusion_matrix(&model.encoder, &model.learner_config(&cfg.learner), &split, &store, &episode_spec, 1000, 0)?;
    print!("{:>10}", "");
    for c in &cm.class_names {
        print!("{c:>10}");
    }
    println!();
    for (c, row) in cm.class_names.iter().zip(&cm.matrix) {
        print!("{c:>10}");
        for v in row {
            print!("{v:>10.3}");
        }
        println!();
    }
    std::fs::create_dir_all(&out)?;
    cm.write_plot_files(&out, "confusion")?;
    println!("wrote {}/confusion.{{csv,dat,gp}}", out.display());
    Ok(())
}
