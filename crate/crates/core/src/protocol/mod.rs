//! Class-disjoint (optionally speaker-disjoint) splits and episode sampling.

mod episode;
mod split;

pub use episode::{generate_episode, Episode, EpisodeSpec};
pub use split::{
    make_split, split_stats, SplitAssignment, SplitCounts, SplitFile, SplitMode, SplitStats, Subset,
    DEFAULT_SPEAKER_RATIOS,
};
