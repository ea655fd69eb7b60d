//! Compares analytic episode gradients with central differences for every
//! head, through the encoder.
//!
//!     cargo run --release --example gradient_check

use fewshot::dataset::{generate_synthetic, FeatureStore, SyntheticSpec};
use fewshot::encoder::init_encoder;
use fewshot::learners::{LearnerConfig, LearnerKind};
use fewshot::meta::episode_loss;
use fewshot::protocol::{generate_episode, make_split, EpisodeSpec, SplitCounts, SplitMode, Subset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 12,
        frames_range: (5, 10),
        class_separation: 1.0,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;
    let store = FeatureStore::load(&manifest)?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::Spo, 0, None)?;
    let episode = generate_episode(&split, &EpisodeSpec::new(5, 2, Subset::Train).with_query(3), &mut fewshot::rng::rng(3))?;
    let encoder = init_encoder(12, 6, 0)?;
    let h = 1e-6;

    for kind in LearnerKind::ALL {
        let cfg = LearnerConfig {
            ridge_lambda: 1.0,
            ..LearnerConfig::new(kind)
        };
        let analytic = episode_loss(&encoder, &cfg, &episode, &store)?;
        let mut worst: f64 = 0.0;
        for idx in 0..encoder.weight.len() {
            let mut up = encoder.clone();
            up.weight.as_mut_slice()[idx] += h;
            let mut down = encoder.clone();
            down.weight.as_mut_slice()[idx] -= h;
            let numeric = (episode_loss(&up, &cfg, &episode, &store)?.loss - episode_loss(&down, &cfg, &episode, &store)?.loss) / (2.0 * h);
            worst = worst.max((numeric - analytic.encoder.weight.as_slice()[idx]).abs());
        }
        let tcfg = |t: f64| LearnerConfig { temperature: t, ..cfg.clone() };
        let dt = (episode_loss(&encoder, &tcfg(cfg.temperature + h), &episode, &store)?.loss
            - episode_loss(&encoder, &tcfg(cfg.temperature - h), &episode, &store)?.loss)
            / (2.0 * h);
        println!(
            "{kind}: loss {:.5}, max |dW analytic - numeric| {worst:.2e}, dL/dt {:.6} vs {:.6}",
            analytic.loss, analytic.temperature, dt
        );
    }
    Ok(())
}
