//! Video records, on-disk formats, pair construction and expert selection.

mod augment;
mod experts;
mod features;
mod manifest;
mod pairs;
mod sequence;
mod video;

pub use augment::{augment_sequence, balance_pairs, AugmentKind, BalanceConfig, BalancedPairs};
pub use experts::{select_experts, ExpertMode, ExpertRegistry};
pub use features::{read_feature_file, write_feature_file, FeatureFile, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{load_videos, DatasetManifest, ManifestRow, Split, MANIFEST_HEADER};
pub use pairs::{make_pairs, make_scoped_pairs, pair_label, LabeledPair, PairScope};
pub use sequence::{ClipFeatureSequence, DEFAULT_CLIP_FRAMES};
pub use video::{ActivityProfile, VideoRecord};
