//! Generates a synthetic corpus and inspects one feature archive.
//!
//!     cargo run --release --example synth_corpus -- [out_dir] [separation]

use std::path::PathBuf;

use fewshot::dataset::{generate_synthetic, mean_pool, read_features, FeatureStore, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fewshot-synth"));
    let separation = args.next().map_or(3.0, |s| s.parse().expect("separation"));
    let spec = SyntheticSpec {
        feature_dim: 64,
        class_separation: separation,
        ..Default::default()
    };
    let manifest = generate_synthetic(&spec, &out)?;
    println!(
        "{} utterances, {} classes, {} speakers in {}",
        manifest.len(),
        manifest.classes.len(),
        manifest.speakers.len(),
        out.display()
    );

    let first = &manifest.records[0];
    let frames = read_features(first)?;
    let pooled = mean_pool(&frames)?;
    println!(
        "{} ({}, {}): {} frames x {} dims, pooled[0..4] = {:.3?}",
        first.utterance_id,
        first.label,
        first.speaker_id,
        frames.n_frames(),
        frames.feature_dim(),
        &pooled[..4]
    );

    // mean distance between class centroids of the pooled features
    let store = FeatureStore::load(&manifest)?;
    let centroids: Vec<Vec<f64>> = manifest
        .classes
        .iter()
        .map(|c| {
            let rows: Vec<usize> = (0..manifest.len()).filter(|&i| &manifest.records[i].label == c).collect();
            (0..store.feature_dim)
                .map(|d| rows.iter().map(|&r| store.pooled[r][d]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    let mut dists = Vec::new();
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let d: f64 = centroids[i].iter().zip(&centroids[j]).map(|(a, b)| (a - b).powi(2)).sum();
            dists.push(d.sqrt());
        }
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("centroid distances: mean {mean:.2}, min {min:.2} (separation {separation})");
    Ok(())
}
