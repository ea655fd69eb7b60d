//! Supervised baseline and skyline against a meta-trained prototype head on
//! the same test episodes.
//!
//!     cargo run --release --example benchmarks -- [separation]

use fewshot::bench::{bench_on_episode, BenchConfig, BenchMode};
use fewshot::dataset::{generate_synthetic, FeatureStore, SyntheticSpec};
use fewshot::meta::{episode_predictions, run_training, TrainConfig};
use fewshot::protocol::{generate_episode, make_split, EpisodeSpec, SplitCounts, SplitMode, Subset};
use fewshot::rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let separation = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("separation"));
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 64,
        class_separation: separation,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;
    let store = FeatureStore::load(&manifest)?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::Spo, 0, None)?;
    let cfg = TrainConfig {
        epochs: 10,
        episodes_per_epoch: 200,
        q_query_train: Some(5),
        ..TrainConfig::default()
    };
    let model = run_training(&store, &split, &cfg, None)?.best;
    let lcfg = model.learner_config(&cfg.learner);

    let bench = BenchConfig::default();
    let episode_spec = EpisodeSpec::new(5, 5, Subset::Test).with_query(5);
    let draws = 50;
    let (mut meta, mut base, mut sky) = (0.0, 0.0, 0.0);
    for i in 0..draws {
        let ep = generate_episode(&split, &episode_spec, &mut rng::stream(11, i))?;
        let labels = ep.query_labels();
        let preds = episode_predictions(&model.encoder, &lcfg, &ep, &store)?;
        meta += preds.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64;
        base += bench_on_episode(&ep, &split, &store, &bench, BenchMode::Baseline, i)?;
        sky += bench_on_episode(&ep, &split, &store, &bench, BenchMode::Skyline, i)?;
    }
    let d = draws as f64;
    println!("separation {separation}, {draws} test episodes (5-way 5-shot):");
    println!("  baseline (MLP on 5 shots)      {:.4}", base / d);
    println!("  meta-trained prototypes        {:.4}", meta / d);
    println!("  skyline (MLP on all records)   {:.4}", sky / d);
    Ok(())
}
