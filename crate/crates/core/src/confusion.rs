//! Episode-averaged confusion matrices over a subset's classes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStore;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::meta::episode_predictions;
use crate::protocol::{generate_episode, EpisodeSpec, SplitAssignment};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row and column labels, in the subset's sorted class order.
    pub class_names: Vec<String>,
    /// `matrix[true][predicted]`, each row averaged over the episodes that
    /// contained that class.
    pub matrix: Vec<Vec<f64>>,
    pub n_way: usize,
    pub m_shot: usize,
    pub q_query: usize,
    pub n_episodes: usize,
    pub seed: u64,
    /// Episodes in which each class took part.
    pub appearances: Vec<usize>,
}

/// Per episode, the predictions of each true class's queries are turned into
/// a row of frequencies; those rows are then averaged over episodes.
/// `spec.n_way` is usually the full class count of the subset.
#[allow(clippy::too_many_arguments)]
pub fn confusion_matrix(
    encoder: &EncoderParams,
    cfg: &LearnerConfig,
    split: &SplitAssignment,
    store: &FeatureStore,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seed: u64,
) -> Result<ConfusionMatrix> {
    if encoder.feature_dim() != store.feature_dim {
        return Err(Error::Shape(format!(
            "checkpoint expects feature_dim {}, data has {}",
            encoder.feature_dim(),
            store.feature_dim
        )));
    }
    spec.check_feasible(split)?;
    let class_names: Vec<String> = split.classes(spec.subset).into_iter().map(String::from).collect();
    let k = class_names.len();
    let global = |name: &str| class_names.iter().position(|c| c == name).expect("episode class in subset");

    let per_episode = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let episode = generate_episode(split, spec, &mut rng::stream(seed, i as u64))?;
            let preds = episode_predictions(encoder, cfg, &episode, store)?;
            let mut rows = vec![vec![0.0; k]; k];
            let mut present = vec![false; k];
            let ids: Vec<usize> = episode.class_names.iter().map(|c| global(c)).collect();
            for (&(_, y), &p) in episode.query.iter().zip(&preds) {
                rows[ids[y]][ids[p]] += 1.0 / spec.q_query as f64;
                present[ids[y]] = true;
            }
            Ok((rows, present))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matrix = vec![vec![0.0; k]; k];
    let mut appearances = vec![0usize; k];
    for (rows, present) in &per_episode {
        for c in 0..k {
            if present[c] {
                appearances[c] += 1;
                for (acc, v) in matrix[c].iter_mut().zip(&rows[c]) {
                    *acc += v;
                }
            }
        }
    }
    for (row, &n) in matrix.iter_mut().zip(&appearances) {
        if n > 0 {
            row.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(ConfusionMatrix {
        class_names,
        matrix,
        n_way: spec.n_way,
        m_shot: spec.m_shot,
        q_query: spec.q_query,
        n_episodes,
        seed,
        appearances,
    })
}

impl ConfusionMatrix {
    /// Long-format CSV: `true,predicted,value`, one line per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true,predicted,value\n");
        for (t, row) in self.class_names.iter().zip(&self.matrix) {
            for (p, v) in self.class_names.iter().zip(row) {
                let _ = writeln!(out, "{t},{p},{v}");
            }
        }
        out
    }

    /// Gnuplot script drawing the matrix as a heat map from a whitespace grid file.
    pub fn gnuplot_script(&self, grid_file: &str, png_file: &str) -> String {
        let k = self.class_names.len();
        let tics: Vec<String> = self
            .class_names
            .iter()
            .enumerate()
            .map(|(i, c)| format!("\"{c}\" {i}"))
            .collect();
        let tics = tics.join(", ");
        format!(
            "set terminal pngcairo size 800,700\n\
             set output '{png_file}'\n\
             set title '{}-way {}-shot confusion over {} episodes'\n\
             set xlabel 'predicted'\n\
             set ylabel 'true'\n\
             set xrange [-0.5:{max}]\n\
             set yrange [{max}:-0.5]\n\
             set cbrange [0:1]\n\
             set xtics ({tics}) rotate by 45 right\n\
             set ytics ({tics})\n\
             plot '{grid_file}' matrix with image notitle\n",
            self.n_way,
            self.m_shot,
            self.n_episodes,
            max = k as f64 - 0.5,
        )
    }

    fn grid(&self) -> String {
        let mut out = String::new();
        for row in &self.matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>.dat` (grid) and `<stem>.gp` next to each other.
    pub fn write_plot_files(&self, dir: &Path, stem: &str) -> Result<()> {
        let files = [
            (format!("{stem}.csv"), self.to_csv()),
            (format!("{stem}.dat"), self.grid()),
            (format!("{stem}.gp"), self.gnuplot_script(&format!("{stem}.dat"), &format!("{stem}.png"))),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
