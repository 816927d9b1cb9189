//! The twin-encoder similarity network and its training loop.

pub(crate) mod model;
mod train;

pub use model::{
    dml_forward, pair_loss_and_grad, ModelConfig, SiameseCache, SiameseParams, DENSE1_WIDTH, DENSE2_WIDTH,
};
pub use train::{
    embed, holdout_split, pair_accuracy, presentation_order, train_dml, DmlOutcome, DmlTrainConfig, EpochRecord,
};
