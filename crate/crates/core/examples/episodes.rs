//! Samples n-way m-shot episodes and prints one as JSON.
//!
//!     cargo run --release --example episodes -- [n_way] [m_shot] [q_query]

use fewshot::dataset::{generate_synthetic, SyntheticSpec};
use fewshot::protocol::{generate_episode, make_split, EpisodeSpec, SplitCounts, SplitMode, Subset};
use fewshot::rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let n = args.first().copied().unwrap_or(5);
    let m = args.get(1).copied().unwrap_or(5);
    let q = args.get(2).copied().unwrap_or(m);

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 8,
        frames_range: (5, 10),
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;
    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::Spo, 0, None)?;
    let spec = EpisodeSpec::new(n, m, Subset::Train).with_query(q);
    spec.check_feasible(&split)?;

    let episode = generate_episode(&split, &spec, &mut rng::stream(7, 0))?;
    println!("{}", serde_json::to_string_pretty(&episode.to_json(&manifest))?);

    // episodes are drawn with replacement: classes recur across episodes
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..1000 {
        for c in generate_episode(&split, &spec, &mut rng::stream(7, i))?.class_names {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    println!("class frequency over 1000 episodes:");
    for (c, k) in counts {
        println!("  {c} {:.3}", k as f64 / 1000.0);
    }
    Ok(())
}
