//! JSON run configuration shared by every command. Every field is optional;
//! unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::meta::TrainConfig;
use crate::protocol::{EpisodeSpec, SplitCounts, SplitMode, Subset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// `google-commands` or `fluent`; ignored when `counts` is set.
    pub preset: String,
    pub counts: Option<SplitCounts>,
    pub mode: SplitMode,
    /// Train/val/test speaker shares for No-SPO.
    pub speaker_ratios: Option<[f64; 3]>,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            preset: "google-commands".into(),
            counts: None,
            mode: SplitMode::Spo,
            speaker_ratios: None,
            seed: 0,
        }
    }
}

impl SplitSection {
    pub fn resolved_counts(&self) -> Result<SplitCounts> {
        if let Some(c) = self.counts {
            return Ok(c);
        }
        SplitCounts::preset(&self.preset)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split preset `{}`", self.preset)))
    }
}

/// Episode spec plus sampling options for `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_way: usize,
    pub m_shot: usize,
    /// Defaults to `m_shot`.
    pub q_query: Option<usize>,
    pub episodes: usize,
    pub subset: Subset,
    pub seed: u64,
    pub shuffle_query_labels: bool,
    pub per_episode: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_way: 5,
            m_shot: 5,
            q_query: None,
            episodes: 2000,
            subset: Subset::Test,
            seed: 0,
            shuffle_query_labels: false,
            per_episode: false,
        }
    }
}

impl EvalSection {
    pub fn spec(&self) -> EpisodeSpec {
        let spec = EpisodeSpec::new(self.n_way, self.m_shot, self.subset);
        match self.q_query {
            Some(q) => spec.with_query(q),
            None => spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfusionSection {
    /// Defaults to every class of the subset.
    pub n_way: Option<usize>,
    pub m_shot: usize,
    pub q_query: Option<usize>,
    pub episodes: usize,
    pub subset: Subset,
    pub seed: u64,
}

impl Default for ConfusionSection {
    fn default() -> Self {
        Self {
            n_way: None,
            m_shot: 5,
            q_query: None,
            episodes: 1000,
            subset: Subset::Test,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub synth: SyntheticSpec,
    pub split: SplitSection,
    pub learner: LearnerConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub bench: BenchConfig,
    pub confusion: ConfusionSection,
}

impl RunConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    /// Training config with the top-level learner section applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learner: self.learner.clone(),
            ..self.train.clone()
        }
    }

    /// Checks every section against its own invariants.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.split.resolved_counts()?;
        if let Some(r) = self.split.speaker_ratios {
            if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "speaker ratios {r:?} must be nonnegative and sum to 1"
                )));
            }
        }
        self.train_config().validate()?;
        self.eval.spec().validate()?;
        if self.eval.episodes == 0 || self.confusion.episodes == 0 {
            return Err(Error::InvalidArgument("episode counts must be positive".into()));
        }
        self.bench.validate()?;
        if self.confusion.m_shot == 0 || self.confusion.q_query == Some(0) {
            return Err(Error::InvalidArgument("confusion m_shot and q_query must be positive".into()));
        }
        Ok(())
    }
}
