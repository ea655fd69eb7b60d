use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance. `feature_path` is resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: String,
    pub feature_path: PathBuf,
    pub n_frames: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    utterance_id: String,
    speaker_id: String,
    label: String,
    feature_path: String,
    n_frames: usize,
    feature_dim: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub records: Vec<UtteranceRecord>,
    pub classes: BTreeSet<String>,
    pub speakers: BTreeSet<String>,
}

impl DatasetManifest {
    /// Validates and derives the class and speaker sets.
    pub fn from_records(path: impl Into<PathBuf>, records: Vec<UtteranceRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyManifest)?;
        let dim = first.feature_dim;
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if !ids.insert(r.utterance_id.as_str()) {
                return Err(Error::DuplicateId(r.utterance_id.clone()));
            }
            if r.feature_dim != dim {
                return Err(Error::InconsistentDim {
                    id: r.utterance_id.clone(),
                    expected: dim,
                    found: r.feature_dim,
                });
            }
        }
        let classes = records.iter().map(|r| r.label.clone()).collect();
        let speakers = records.iter().map(|r| r.speaker_id.clone()).collect();
        Ok(Self {
            path: path.into(),
            records,
            classes,
            speakers,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.records[0].feature_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index_of(&self, utterance_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.utterance_id == utterance_id)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(""));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.into(),
            line: i + 1,
            reason,
        };
        let parsed: ManifestLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if parsed.n_frames == 0 {
            return Err(malformed("n_frames must be >= 1".into()));
        }
        if parsed.feature_dim == 0 {
            return Err(malformed("feature_dim must be >= 1".into()));
        }
        records.push(UtteranceRecord {
            feature_path: root.join(&parsed.feature_path),
            utterance_id: parsed.utterance_id,
            speaker_id: parsed.speaker_id,
            label: parsed.label,
            n_frames: parsed.n_frames,
            feature_dim: parsed.feature_dim,
        });
    }
    DatasetManifest::from_records(path, records)
}

/// Writes `records` as a manifest at `path`, storing feature paths relative
/// to the manifest directory when possible.
pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let path = path.as_ref();
    let root = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for r in records {
        let rel = r.feature_path.strip_prefix(root).unwrap_or(&r.feature_path);
        let line = ManifestLine {
            utterance_id: r.utterance_id.clone(),
            speaker_id: r.speaker_id.clone(),
            label: r.label.clone(),
            feature_path: rel.to_string_lossy().replace('\\', "/"),
            n_frames: r.n_frames,
            feature_dim: r.feature_dim,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
