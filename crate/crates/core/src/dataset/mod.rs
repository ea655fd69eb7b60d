//! On-disk data model: JSON-lines manifests, `FSFA` frame-feature archives,
//! the synthetic corpus generator and pooled feature loading.

mod archive;
mod features;
mod manifest;
mod synth;

pub use archive::{read_archive, read_features, write_features, FrameMatrix, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use features::{frame_logvar, mean_pool, FeatureStore};
pub use manifest::{load_manifest, write_manifest, DatasetManifest, UtteranceRecord};
pub use synth::{generate_synthetic, SyntheticSpec};
