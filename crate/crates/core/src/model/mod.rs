//! The full scoring model, its loss, training loop and grid search.

mod config;
mod forward;
mod train;

pub use config::{Ablation, ModelConfig, DEFAULT_ALPHAS, DEFAULT_LEARNING_RATES};
pub use forward::{
    batch_targets, bce_loss, check_compatible, forward_rows, initialize, loss_rows, predict, rank_by_score,
    PredictionMatrix, PreparedData, LOSS_EPS,
};
pub use train::{
    format_epoch_log, grid_search, train, train_from, validation_auc, EpochRecord, GridCell, GridOutcome,
    TrainOutcome,
};
