use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{SplitAssignment, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub m_shot: usize,
    pub q_query: usize,
    pub subset: Subset,
}

impl EpisodeSpec {
    /// `q_query` defaults to `m_shot`.
    pub fn new(n_way: usize, m_shot: usize, subset: Subset) -> Self {
        Self {
            n_way,
            m_shot,
            q_query: m_shot,
            subset,
        }
    }

    pub fn with_query(mut self, q_query: usize) -> Self {
        self.q_query = q_query;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InfeasibleEpisode(format!("n_way must be >= 2, got {}", self.n_way)));
        }
        if self.m_shot == 0 || self.q_query == 0 {
            return Err(Error::InfeasibleEpisode("m_shot and q_query must be positive".into()));
        }
        Ok(())
    }

    /// Checks the spec against the subset's class pool.
    pub fn check_feasible(&self, split: &SplitAssignment) -> Result<()> {
        self.validate()?;
        let pool = split.pool(self.subset);
        if pool.len() < self.n_way {
            return Err(Error::InfeasibleEpisode(format!(
                "{}-way episodes need {} classes, {} subset has {}",
                self.n_way,
                self.n_way,
                self.subset,
                pool.len()
            )));
        }
        let need = self.m_shot + self.q_query;
        if let Some((class, recs)) = pool.iter().find(|(_, r)| r.len() < need) {
            return Err(Error::InfeasibleEpisode(format!(
                "class `{class}` in {} subset has {} records, {}-shot {}-query needs {need}",
                self.subset,
                recs.len(),
                self.m_shot,
                self.q_query
            )));
        }
        Ok(())
    }
}

/// One n-way m-shot task. Entries are (manifest record index, local class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub spec: EpisodeSpec,
    pub class_names: Vec<String>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|&(_, c)| c).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|&(_, c)| c).collect()
    }

    /// Debug dump: class names plus support and query utterance ids.
    pub fn to_json(&self, manifest: &DatasetManifest) -> serde_json::Value {
        let ids = |v: &[(usize, usize)]| -> Vec<&str> {
            v.iter().map(|&(i, _)| manifest.records[i].utterance_id.as_str()).collect()
        };
        json!({
            "class_names": self.class_names,
            "support": ids(&self.support),
            "query": ids(&self.query),
        })
    }
}

/// Samples `n_way` classes, then `m_shot + q_query` distinct utterances per
/// class, all without replacement within the episode.
pub fn generate_episode(split: &SplitAssignment, spec: &EpisodeSpec, rng: &mut Rng) -> Result<Episode> {
    spec.check_feasible(split)?;
    let pool = split.pool(spec.subset);
    let mut class_order: Vec<usize> = (0..pool.len()).collect();
    let (chosen, _) = class_order.partial_shuffle(rng, spec.n_way);
    let chosen = chosen.to_vec();

    let mut support = Vec::with_capacity(spec.n_way * spec.m_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.q_query);
    let mut class_names = Vec::with_capacity(spec.n_way);
    for (local, &ci) in chosen.iter().enumerate() {
        let (name, records) = &pool[ci];
        class_names.push(name.clone());
        let mut recs = records.clone();
        let (picked, _) = recs.partial_shuffle(rng, spec.m_shot + spec.q_query);
        support.extend(picked[..spec.m_shot].iter().map(|&r| (r, local)));
        query.extend(picked[spec.m_shot..].iter().map(|&r| (r, local)));
    }
    Ok(Episode {
        spec: *spec,
        class_names,
        support,
        query,
    })
}
