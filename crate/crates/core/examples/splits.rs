//! Class-disjoint splits with and without speaker overlap.
//!
//!     cargo run --release --example splits

use fewshot::dataset::{generate_synthetic, SyntheticSpec};
use fewshot::protocol::{make_split, split_stats, SplitCounts, SplitMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        feature_dim: 8,
        frames_range: (5, 10),
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, dir.path())?;

    for (mode, ratios) in [(SplitMode::Spo, None), (SplitMode::NoSpo, None), (SplitMode::NoSpo, Some([0.5, 0.25, 0.25]))] {
        let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, mode, 0, ratios)?;
        println!("{mode:?} speakers {:?}", ratios.unwrap_or([0.8, 0.1, 0.1]));
        println!("  {:<6}{:>8}{:>8}{:>9}", "subset", "classes", "files", "speakers");
        for s in split_stats(&split, &manifest) {
            println!("  {:<6}{:>8}{:>8}{:>9}", s.subset.to_string(), s.classes, s.audio_files, s.speakers);
        }
    }

    let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, SplitMode::NoSpo, 0, Some([0.5, 0.25, 0.25]))?;
    let path = dir.path().join("split.json");
    split.save(&path, &manifest)?;
    println!("split file: {} bytes", std::fs::metadata(&path)?.len());
    Ok(())
}
