use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub const DEFAULT_SPEAKER_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        })
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "val" | "validation" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            _ => Err(Error::InvalidArgument(format!("unknown subset `{s}`"))),
        }
    }
}

/// SPO keeps speaker overlap across subsets; No-SPO makes speakers disjoint too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    #[serde(rename = "SPO")]
    Spo,
    #[serde(rename = "NoSPO")]
    NoSpo,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "spo" => Ok(SplitMode::Spo),
            "nospo" => Ok(SplitMode::NoSpo),
            _ => Err(Error::InvalidArgument(format!("unknown split mode `{s}`"))),
        }
    }
}

/// Number of classes per subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const GOOGLE_COMMANDS: SplitCounts = SplitCounts { train: 18, val: 5, test: 5 };
    pub const FLUENT: SplitCounts = SplitCounts { train: 15, val: 8, test: 8 };

    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "google-commands" | "google" => Some(Self::GOOGLE_COMMANDS),
            "fluent" | "fluent-speech-commands" => Some(Self::FLUENT),
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn get(&self, s: Subset) -> usize {
        match s {
            Subset::Train => self.train,
            Subset::Val => self.val,
            Subset::Test => self.test,
        }
    }
}

/// A resolved protocol: which class (and speaker) belongs to which subset, and
/// which manifest records survive.
#[derive(Debug, Clone)]
pub struct SplitAssignment {
    pub mode: SplitMode,
    pub seed: u64,
    pub counts: SplitCounts,
    pub speaker_ratios: Option<[f64; 3]>,
    pub class_split: BTreeMap<String, Subset>,
    pub speaker_split: Option<BTreeMap<String, Subset>>,
    /// Retained record indices per subset, ascending manifest order.
    pub retained: [Vec<usize>; 3],
    /// Per subset: (class, retained record indices) in sorted class order.
    pools: [Vec<(String, Vec<usize>)>; 3],
    pub manifest_path: Option<PathBuf>,
}

fn partition_sizes(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let a = ((ratios[0] * total as f64).round() as usize).min(total);
    let b = ((ratios[1] * total as f64).round() as usize).min(total - a);
    [a, b, total - a - b]
}

fn shuffled(mut items: Vec<String>, seed: u64, stream: u64) -> Vec<String> {
    items.shuffle(&mut rng::stream(seed, stream));
    items
}

pub fn make_split(
    manifest: &DatasetManifest,
    counts: SplitCounts,
    mode: SplitMode,
    seed: u64,
    speaker_ratios: Option<[f64; 3]>,
) -> Result<SplitAssignment> {
    if counts.total() > manifest.classes.len() {
        return Err(Error::InsufficientClasses {
            requested: counts.total(),
            available: manifest.classes.len(),
        });
    }
    let classes = shuffled(manifest.classes.iter().cloned().collect(), seed, domain::SPLIT_CLASSES);
    let mut class_split = BTreeMap::new();
    let mut cursor = classes.iter();
    for subset in Subset::ALL {
        for class in cursor.by_ref().take(counts.get(subset)) {
            class_split.insert(class.clone(), subset);
        }
    }

    let (speaker_split, ratios) = match mode {
        SplitMode::Spo => (None, None),
        SplitMode::NoSpo => {
            let ratios = speaker_ratios.unwrap_or(DEFAULT_SPEAKER_RATIOS);
            if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "speaker ratios {ratios:?} must be nonnegative and sum to 1"
                )));
            }
            if manifest.speakers.len() < 3 {
                return Err(Error::InvalidArgument(format!(
                    "No-SPO needs at least 3 speakers, manifest has {}",
                    manifest.speakers.len()
                )));
            }
            let speakers = shuffled(manifest.speakers.iter().cloned().collect(), seed, domain::SPLIT_SPEAKERS);
            let sizes = partition_sizes(speakers.len(), ratios);
            let mut map = BTreeMap::new();
            let mut cursor = speakers.into_iter();
            for (subset, size) in Subset::ALL.into_iter().zip(sizes) {
                for spk in cursor.by_ref().take(size) {
                    map.insert(spk, subset);
                }
            }
            (Some(map), Some(ratios))
        }
    };

    let mut retained: [Vec<usize>; 3] = Default::default();
    for (i, r) in manifest.records.iter().enumerate() {
        let Some(&subset) = class_split.get(&r.label) else {
            continue;
        };
        let keep = match &speaker_split {
            None => true,
            Some(spk) => spk.get(&r.speaker_id) == Some(&subset),
        };
        if keep {
            retained[subset.index()].push(i);
        }
    }

    let split = SplitAssignment::assemble(mode, seed, counts, ratios, class_split, speaker_split, retained, manifest)?;
    split.check_nonempty_classes()?;
    Ok(split)
}

impl SplitAssignment {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        mode: SplitMode,
        seed: u64,
        counts: SplitCounts,
        speaker_ratios: Option<[f64; 3]>,
        class_split: BTreeMap<String, Subset>,
        speaker_split: Option<BTreeMap<String, Subset>>,
        retained: [Vec<usize>; 3],
        manifest: &DatasetManifest,
    ) -> Result<Self> {
        let mut pools: [Vec<(String, Vec<usize>)>; 3] = Default::default();
        for subset in Subset::ALL {
            let mut by_class: BTreeMap<&str, Vec<usize>> = class_split
                .iter()
                .filter(|(_, s)| **s == subset)
                .map(|(c, _)| (c.as_str(), Vec::new()))
                .collect();
            for &i in &retained[subset.index()] {
                let label = manifest.records[i].label.as_str();
                by_class
                    .get_mut(label)
                    .ok_or_else(|| Error::InvalidArgument(format!("record {i} of class `{label}` retained in {subset}")))?
                    .push(i);
            }
            pools[subset.index()] = by_class.into_iter().map(|(c, v)| (c.to_string(), v)).collect();
        }
        Ok(Self {
            mode,
            seed,
            counts,
            speaker_ratios,
            class_split,
            speaker_split,
            retained,
            pools,
            manifest_path: Some(manifest.path.clone()),
        })
    }

    fn check_nonempty_classes(&self) -> Result<()> {
        for subset in Subset::ALL {
            if let Some((class, _)) = self.pools[subset.index()].iter().find(|(_, recs)| recs.is_empty()) {
                return Err(Error::EmptySplitClass {
                    split: subset.to_string(),
                    class: class.clone(),
                });
            }
        }
        Ok(())
    }

    /// (class, retained records) pairs of `subset`, sorted by class name.
    pub fn pool(&self, subset: Subset) -> &[(String, Vec<usize>)] {
        &self.pools[subset.index()]
    }

    pub fn classes(&self, subset: Subset) -> Vec<&str> {
        self.pool(subset).iter().map(|(c, _)| c.as_str()).collect()
    }

    pub fn to_file(&self, manifest: &DatasetManifest) -> SplitFile {
        SplitFile {
            manifest: self.manifest_path.clone(),
            mode: self.mode,
            seed: self.seed,
            counts: self.counts,
            speaker_ratios: self.speaker_ratios,
            class_split: self.class_split.clone(),
            speaker_split: self.speaker_split.clone(),
            retained: Subset::ALL
                .into_iter()
                .map(|s| {
                    let ids = self.retained[s.index()]
                        .iter()
                        .map(|&i| manifest.records[i].utterance_id.clone())
                        .collect();
                    (s, ids)
                })
                .collect(),
            config: None,
        }
    }

    /// Rebuilds the assignment from a split file without touching any RNG.
    pub fn from_file(file: &SplitFile, manifest: &DatasetManifest) -> Result<Self> {
        let index: BTreeMap<&str, usize> = manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.utterance_id.as_str(), i))
            .collect();
        let mut retained: [Vec<usize>; 3] = Default::default();
        for (subset, ids) in &file.retained {
            let mut v = ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::InvalidArgument(format!("split references unknown utterance `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            v.sort_unstable();
            retained[subset.index()] = v;
        }
        for class in file.class_split.keys() {
            if !manifest.classes.contains(class) {
                return Err(Error::InvalidArgument(format!("split references unknown class `{class}`")));
            }
        }
        Self::assemble(
            file.mode,
            file.seed,
            file.counts,
            file.speaker_ratios,
            file.class_split.clone(),
            file.speaker_split.clone(),
            retained,
            manifest,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_file(manifest))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// JSON form of a split. Reconstructs the protocol exactly given the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub mode: SplitMode,
    pub seed: u64,
    pub counts: SplitCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_ratios: Option<[f64; 3]>,
    pub class_split: BTreeMap<String, Subset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_split: Option<BTreeMap<String, Subset>>,
    pub retained: BTreeMap<Subset, Vec<String>>,
    /// Resolved run configuration that produced the split, when written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl SplitFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub subset: Subset,
    pub classes: usize,
    pub audio_files: usize,
    pub speakers: usize,
}

pub fn split_stats(split: &SplitAssignment, manifest: &DatasetManifest) -> Vec<SplitStats> {
    Subset::ALL
        .into_iter()
        .map(|subset| {
            let recs = &split.retained[subset.index()];
            let speakers: BTreeSet<&str> = recs.iter().map(|&i| manifest.records[i].speaker_id.as_str()).collect();
            SplitStats {
                subset,
                classes: split.pool(subset).len(),
                audio_files: recs.len(),
                speakers: speakers.len(),
            }
        })
        .collect()
}
