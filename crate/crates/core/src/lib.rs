//! Siamese deep metric learning for action quality assessment.
//!
//! A recurrent encoder is shared between two twins; the pair of embeddings
//! is classified as similar or dissimilar from judged score differences.
//! A regression head on top of the frozen network then scores a
//! performance relative to a reference (expert) performance of the same
//! action type, and trimmed-sequence comparisons give clip-level feedback.
//!
//! Module map:
//!
//! * [`numeric`]: dense and LSTM kernels with explicit backward passes,
//!   losses, optimizers and a finite-difference gradient checker.
//! * [`data`]: video records, the feature-file and manifest formats, pair
//!   labeling, augmentation, balancing, padding and expert selection.
//! * [`siamese`]: the twin network and its training loop.
//! * [`scoring`]: the expert-referenced regression head.
//! * [`feedback`]: clip-level similarity and faulty-clip reports.
//! * [`eval`]: Spearman correlation, MSE, precision and recall.
//! * [`synthetic`]: planted-ground-truth dataset generation.
//! * [`checkpoint`]: the binary parameter checkpoint format.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod numeric;
pub mod scoring;
pub mod siamese;
pub mod synthetic;

pub use error::{Error, Result};

pub use data::{
    ClipFeatureSequence, DatasetManifest, ExpertMode, ExpertRegistry, LabeledPair, PairScope, Split,
    VideoRecord,
};
pub use checkpoint::Checkpoint;
pub use eval::{mse, precision_recall, spearman_rho, EvalReport};
pub use feedback::{clip_similarity, faulty_clips, trim_for_clip, ClipFeedback, FeedbackReport};
pub use scoring::{expert_bias_decompose, score_forward, train_score_head, ExpertBiasTerms, ScoreHead, ScoreModel};
pub use siamese::{dml_forward, embed, train_dml, DmlTrainConfig, ModelConfig, SiameseParams};
pub use synthetic::{generate_dataset, oracle_pair_label, SyntheticConfig};

pub use numeric::{Activation, OptimizerConfig, OptimizerState, ParamSet, ParameterBlock};



